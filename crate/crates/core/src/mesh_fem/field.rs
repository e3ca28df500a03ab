use std::sync::Arc;

use super::mesh::{Point, TriMesh};
use crate::error::{Error, Result};

/// Piecewise-linear field: one value per mesh node.
#[derive(Clone, Debug)]
pub struct ScalarField {
    mesh: Arc<TriMesh>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::validation(format!(
                "scalar field has {} values for {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("scalar field contains non-finite values"));
        }
        Ok(ScalarField { mesh, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_nodes();
        ScalarField { mesh, values: vec![0.0; n] }
    }

    pub fn from_fn(mesh: Arc<TriMesh>, f: impl Fn(Point) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        ScalarField { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Constant gradient of the linear interpolant on triangle `t`.
    pub fn gradient_on(&self, t: usize) -> [f64; 2] {
        let g = self.mesh.shape_gradients(t);
        let tri = self.mesh.triangle(t);
        let mut out = [0.0; 2];
        for k in 0..3 {
            let u = self.values[tri[k]];
            out[0] += u * g[k][0];
            out[1] += u * g[k][1];
        }
        out
    }

    /// Per-triangle gradient of the P1 interpolant.
    pub fn gradient(&self) -> VectorField {
        let values = (0..self.mesh.num_triangles()).map(|t| self.gradient_on(t)).collect();
        VectorField { mesh: self.mesh.clone(), values }
    }

    /// Value at triangle centroid (mean of the vertex values).
    pub fn centroid_value(&self, t: usize) -> f64 {
        let tri = self.mesh.triangle(t);
        (self.values[tri[0]] + self.values[tri[1]] + self.values[tri[2]]) / 3.0
    }

    /// Exact L² norm of the P1 interpolant.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let [a, b, c] = self.mesh.triangle(t).map(|i| self.values[i]);
            // ∫_T u² = |T|/6 (a²+b²+c²+ab+bc+ca)
            acc += self.mesh.area(t) / 6.0 * (a * a + b * b + c * c + a * b + b * c + c * a);
        }
        acc.sqrt()
    }

    /// H¹ seminorm ‖∇u‖_{L²}.
    pub fn h1_seminorm(&self) -> f64 {
        (0..self.mesh.num_triangles())
            .map(|t| {
                let g = self.gradient_on(t);
                self.mesh.area(t) * (g[0] * g[0] + g[1] * g[1])
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Full H¹ norm.
    pub fn h1_norm(&self) -> f64 {
        self.l2_norm().hypot(self.h1_seminorm())
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        same_mesh(&self.mesh, &other.mesh)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ScalarField { mesh: self.mesh.clone(), values })
    }
}

/// Piecewise-constant 2-vector field: one vector per triangle.
#[derive(Clone, Debug)]
pub struct VectorField {
    mesh: Arc<TriMesh>,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != mesh.num_triangles() {
            return Err(Error::validation(format!(
                "vector field has {} values for {} triangles",
                values.len(),
                mesh.num_triangles()
            )));
        }
        if values.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::validation("vector field contains non-finite values"));
        }
        Ok(VectorField { mesh, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_triangles();
        VectorField { mesh, values: vec![[0.0; 2]; n] }
    }

    pub fn constant(mesh: Arc<TriMesh>, v: [f64; 2]) -> Self {
        let n = mesh.num_triangles();
        VectorField { mesh, values: vec![v; n] }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn get(&self, t: usize) -> [f64; 2] {
        self.values[t]
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| [c * v[0], c * v[1]]).collect(),
        }
    }

    /// ∫_Ω |V − W| (pointwise Euclidean norm).
    pub fn l1_distance(&self, other: &VectorField) -> Result<f64> {
        same_mesh(&self.mesh, &other.mesh)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(t, (a, b))| self.mesh.area(t) * (a[0] - b[0]).hypot(a[1] - b[1]))
            .sum())
    }

    /// ∫_Ω |V|².
    pub fn l2_norm_squared(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(t, v)| self.mesh.area(t) * (v[0] * v[0] + v[1] * v[1]))
            .sum()
    }
}

/// Lower and upper conductivity bounds, `0 < low ≤ high`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0) || !(high >= low) || !high.is_finite() {
            return Err(Error::validation(format!(
                "conductivity bounds must satisfy 0 < low <= high (got {low}, {high})"
            )));
        }
        Ok(Bounds { low, high })
    }

    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.low, self.high)
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.low && s <= self.high
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

/// Per-triangle conductivity with known bounds.
#[derive(Clone, Debug)]
pub struct ConductivityMap {
    mesh: Arc<TriMesh>,
    sigma: Vec<f64>,
    bounds: Bounds,
}

impl ConductivityMap {
    pub fn new(mesh: Arc<TriMesh>, sigma: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if sigma.len() != mesh.num_triangles() {
            return Err(Error::validation(format!(
                "conductivity has {} values for {} triangles",
                sigma.len(),
                mesh.num_triangles()
            )));
        }
        if let Some((t, s)) = sigma.iter().enumerate().find(|(_, s)| !bounds.contains(**s)) {
            return Err(Error::validation(format!(
                "sigma[{t}] = {s} outside [{}, {}]",
                bounds.low, bounds.high
            )));
        }
        Ok(ConductivityMap { mesh, sigma, bounds })
    }

    pub fn constant(mesh: Arc<TriMesh>, value: f64, bounds: Bounds) -> Result<Self> {
        let n = mesh.num_triangles();
        ConductivityMap::new(mesh, vec![value; n], bounds)
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn get(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Same map with `sigma` replaced; values are clamped into the bounds.
    pub fn with_values_clamped(&self, sigma: Vec<f64>) -> ConductivityMap {
        assert_eq!(sigma.len(), self.sigma.len());
        let sigma = sigma.into_iter().map(|s| self.bounds.clamp(s)).collect();
        ConductivityMap { mesh: self.mesh.clone(), sigma, bounds: self.bounds }
    }

    /// Piecewise-constant lookup of this map at the centroids of `mesh`.
    pub fn resample_onto(&self, mesh: &Arc<TriMesh>) -> Result<ConductivityMap> {
        if Arc::ptr_eq(&self.mesh, mesh) || *self.mesh == **mesh {
            return Ok(ConductivityMap { mesh: mesh.clone(), ..self.clone() });
        }
        let locator = super::locate::Locator::new(self.mesh.clone());
        let sigma = (0..mesh.num_triangles())
            .map(|t| {
                let c = mesh.centroid(t);
                locator.locate(c).map(|k| self.sigma[k]).ok_or_else(|| {
                    Error::geometry(format!("centroid {c:?} of triangle {t} lies outside the source mesh"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(ConductivityMap { mesh: mesh.clone(), sigma, bounds: self.bounds })
    }

    /// Relative L² distance `‖σ − ρ‖ / ‖ρ‖` on this mesh.
    pub fn relative_l2_error(&self, reference: &ConductivityMap) -> Result<f64> {
        same_mesh(&self.mesh, &reference.mesh)?;
        let (mut num, mut den) = (0.0, 0.0);
        for t in 0..self.sigma.len() {
            let a = self.mesh.area(t);
            num += a * (self.sigma[t] - reference.sigma[t]).powi(2);
            den += a * reference.sigma[t].powi(2);
        }
        Ok((num / den).sqrt())
    }
}

pub(crate) fn same_mesh(a: &Arc<TriMesh>, b: &Arc<TriMesh>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::validation("fields live on different meshes"))
    }
}
