//! P1 assembly of `−∇·(A∇u) = f − ∇·G` and Dirichlet-constrained solves.
//!
//! The weak form is `∫ A∇u·∇φ = ∫ fφ + ∫ G·∇φ`, so the natural boundary
//! condition on unconstrained boundary parts is `(A∇u − G)·ν = 0`.
//!
//! Assembly runs sequentially over triangles, so repeated runs give
//! bit-identical matrices.

use std::sync::Arc;

use super::field::ScalarField;
use super::mesh::{Point, TriMesh};
use super::sparse::{solve_spd, CsrMatrix, SolverKind};
use crate::error::{Error, Result};

pub type Coefficient = [[f64; 2]; 2];

/// Stiffness matrix, load vector and Dirichlet constraints on one mesh.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    mesh: Arc<TriMesh>,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    dirichlet: Vec<Option<f64>>,
}

fn node_pattern(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut pattern: Vec<Vec<usize>> = (0..mesh.num_nodes()).map(|i| vec![i]).collect();
    for e in mesh.edges() {
        let [a, b] = e.nodes;
        pattern[a].push(b);
        pattern[b].push(a);
    }
    for row in &mut pattern {
        row.sort_unstable();
    }
    pattern
}

/// Assembles `K_ij = Σ_T ∫_T (A_T ∇φ_i)·∇φ_j` for a per-triangle
/// symmetric positive-semidefinite coefficient `A_T`.
pub fn assemble_diffusion(
    mesh: &Arc<TriMesh>,
    coeff: impl Fn(usize) -> Coefficient,
) -> Result<SparseSystem> {
    let mut matrix = CsrMatrix::from_pattern(&node_pattern(mesh));
    for t in 0..mesh.num_triangles() {
        let a = coeff(t);
        let scale = a[0][0].abs().max(a[1][1].abs()).max(f64::MIN_POSITIVE);
        if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
            return Err(Error::validation(format!("coefficient on triangle {t} is not symmetric")));
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if a[0][0] < 0.0 || a[1][1] < 0.0 || det < -1e-12 * scale * scale {
            return Err(Error::validation(format!(
                "coefficient on triangle {t} is not positive semidefinite"
            )));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("coefficient on triangle {t} is not finite")));
        }
        let g = mesh.shape_gradients(t);
        let area = mesh.area(t);
        let tri = mesh.triangle(t);
        for i in 0..3 {
            let ag = [
                a[0][0] * g[i][0] + a[0][1] * g[i][1],
                a[1][0] * g[i][0] + a[1][1] * g[i][1],
            ];
            for j in 0..3 {
                matrix.add(tri[i], tri[j], area * (ag[0] * g[j][0] + ag[1] * g[j][1]));
            }
        }
    }
    let n = mesh.num_nodes();
    Ok(SparseSystem { mesh: mesh.clone(), matrix, rhs: vec![0.0; n], dirichlet: vec![None; n] })
}

/// Scalar-coefficient convenience wrapper: `A_T = c_T I`.
pub fn assemble_scalar_diffusion(mesh: &Arc<TriMesh>, coeff: &[f64]) -> Result<SparseSystem> {
    if coeff.len() != mesh.num_triangles() {
        return Err(Error::validation("one coefficient per triangle required"));
    }
    assemble_diffusion(mesh, |t| [[coeff[t], 0.0], [0.0, coeff[t]]])
}

impl SparseSystem {
    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn dirichlet(&self) -> &[Option<f64>] {
        &self.dirichlet
    }

    /// Adds `∫ G·∇φ_i` for a per-triangle constant vector `G`.
    pub fn add_flux_load(&mut self, flux: &[[f64; 2]]) {
        assert_eq!(flux.len(), self.mesh.num_triangles());
        for (t, gt) in flux.iter().enumerate() {
            if gt[0] == 0.0 && gt[1] == 0.0 {
                continue;
            }
            let g = self.mesh.shape_gradients(t);
            let area = self.mesh.area(t);
            for (k, &i) in self.mesh.triangle(t).iter().enumerate() {
                self.rhs[i] += area * (gt[0] * g[k][0] + gt[1] * g[k][1]);
            }
        }
    }

    /// Adds `∫ f φ_i` using the edge-midpoint rule (exact for quadratics).
    pub fn add_body_load(&mut self, f: impl Fn(Point) -> f64) {
        for t in 0..self.mesh.num_triangles() {
            let [a, b, c] = self.mesh.vertices(t);
            let tri = self.mesh.triangle(t);
            let mid = |p: Point, q: Point| [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            // midpoints opposite to vertex 2, 0, 1
            let (fab, fbc, fca) = (f(mid(a, b)), f(mid(b, c)), f(mid(c, a)));
            let w = self.mesh.area(t) / 3.0;
            // φ_i = 1/2 at the two midpoints adjacent to vertex i
            self.rhs[tri[0]] += w * 0.5 * (fab + fca);
            self.rhs[tri[1]] += w * 0.5 * (fab + fbc);
            self.rhs[tri[2]] += w * 0.5 * (fbc + fca);
        }
    }

    pub fn set_dirichlet(&mut self, node: usize, value: f64) {
        self.dirichlet[node] = Some(value);
    }

    /// Constrains every flagged node to `g(x)`.
    pub fn set_dirichlet_where(&mut self, flags: &[bool], g: impl Fn(Point) -> f64) {
        for (i, &f) in flags.iter().enumerate() {
            if f {
                self.dirichlet[i] = Some(g(self.mesh.node(i)));
            }
        }
    }

    pub fn solve(&self) -> Result<ScalarField> {
        self.solve_with(SolverKind::default())
    }

    /// Eliminates the constrained rows and columns (keeping symmetry) and
    /// solves the reduced SPD system.
    pub fn solve_with(&self, kind: SolverKind) -> Result<ScalarField> {
        let n = self.mesh.num_nodes();
        let free: Vec<usize> = (0..n).filter(|&i| self.dirichlet[i].is_none()).collect();
        let mut u: Vec<f64> = self.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
        if !free.is_empty() {
            let mut b: Vec<f64> = Vec::with_capacity(free.len());
            for &i in &free {
                let lifted: f64 = self
                    .matrix
                    .row(i)
                    .filter_map(|(j, v)| self.dirichlet[j].map(|g| v * g))
                    .sum();
                b.push(self.rhs[i] - lifted);
            }
            let k = self.matrix.principal_submatrix(&free);
            let x = solve_spd(&k, &b, kind)?;
            for (&i, xi) in free.iter().zip(x) {
                u[i] = xi;
            }
        }
        ScalarField::new(self.mesh.clone(), u)
    }

    /// Nodal reactions `K u − b`. They vanish (up to solver tolerance) on
    /// free nodes; on constrained nodes they are the discrete boundary flux
    /// `∫ (A∇u − G)·∇φ_i`, i.e. the current leaving through that node.
    pub fn reactions(&self, u: &ScalarField) -> Vec<f64> {
        let ku = self.matrix.mul_vec(u.values());
        ku.iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }
}

/// Per-triangle gradient of a P1 field.
pub fn gradient(field: &ScalarField) -> super::field::VectorField {
    field.gradient()
}
