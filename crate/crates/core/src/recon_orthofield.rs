//! Direct reconstruction from the internal current by the orthogonal-field
//! method.
//!
//! With `D = σ∇U` and `F = (D₂, −D₁)` the potential satisfies the transport
//! equation `F·∇U = 0`. It is regularised into the elliptic problem
//! `∇·[(εI + FFᵀ)∇u] = 0` with Dirichlet data on the whole boundary, and the
//! conductivity is read off as `σ = |D|² / (D·∇u)`. The solve can be
//! repeated on meshes refined where the recovered σ jumps.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_fem::{
    assemble_diffusion, refine_with_parents, same_mesh, BoundaryTag, Bounds, ConductivityMap, Locator,
    ScalarField, TriMesh, VectorField,
};
use crate::recon_control::{IterationRecord, ReconResult, ReconStatus};

/// Triangles with `|D|² < DEGENERATE_FLOOR · max|D|²` carry no usable data.
pub const DEGENERATE_FLOOR: f64 = 1e-10;
/// Largest fraction of degenerate triangles before recovery gives up.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.1;

/// Dirichlet data for the regularised problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryData {
    /// `u = x₂` on the whole boundary.
    Linear,
    /// `u = 0` on Γ1, `1` on Γ2, and on Γ0 the normalised integral of the
    /// tangential current from the Γ1 end. This equals `U` wherever σ is
    /// constant along Γ0.
    #[default]
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthoConfig {
    pub epsilon: f64,
    pub refine_rounds: usize,
    /// Fraction of triangles refined per round, ranked by the jump of σ.
    pub refine_fraction: f64,
    pub sigma_clip: Bounds,
    pub boundary: BoundaryData,
    /// With [`BoundaryData::Current`], read the current this far inside
    /// the insulated sides, away from the boundary layer of the estimate.
    pub boundary_offset: f64,
}

impl Default for OrthoConfig {
    fn default() -> Self {
        OrthoConfig {
            epsilon: 1e-3,
            refine_rounds: 2,
            refine_fraction: 0.2,
            sigma_clip: Bounds { low: 0.01, high: 100.0 },
            boundary: BoundaryData::Current,
            boundary_offset: 0.0,
        }
    }
}

impl OrthoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::validation(format!("epsilon must be positive (got {})", self.epsilon)));
        }
        if !(self.refine_fraction > 0.0 && self.refine_fraction <= 1.0) {
            return Err(Error::validation("refine_fraction must lie in (0, 1]"));
        }
        Bounds::new(self.sigma_clip.low, self.sigma_clip.high)?;
        if !(self.boundary_offset >= 0.0) || !self.boundary_offset.is_finite() {
            return Err(Error::validation("boundary_offset must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `F = (D₂, −D₁)` per triangle.
pub fn orthogonal_field(d: &VectorField) -> VectorField {
    let v = d.values().iter().map(|v| [v[1], -v[0]]).collect();
    VectorField::new(d.mesh().clone(), v).expect("same mesh")
}

/// Nodal Dirichlet values for `kind`; interior entries are unused.
pub fn boundary_values(d: &VectorField, kind: BoundaryData) -> Result<Vec<f64>> {
    boundary_values_offset(d, kind, 0.0)
}

/// As [`boundary_values`], sampling the current `offset` inside Γ0.
pub fn boundary_values_offset(d: &VectorField, kind: BoundaryData, offset: f64) -> Result<Vec<f64>> {
    let mesh = d.mesh();
    match kind {
        BoundaryData::Linear => {
            let (lo, hi) = mesh.bounding_box();
            Ok(mesh.nodes().iter().map(|p| (p[1] - lo[1]) / (hi[1] - lo[1])).collect())
        }
        BoundaryData::Current => current_boundary_values(mesh, d, offset),
    }
}

fn current_boundary_values(mesh: &Arc<TriMesh>, d: &VectorField, offset: f64) -> Result<Vec<f64>> {
    let n = mesh.num_nodes();
    let g1 = mesh.nodes_on(BoundaryTag::Gamma1);
    let g2 = mesh.nodes_on(BoundaryTag::Gamma2);
    let mut values: Vec<f64> = (0..n).map(|i| if g2[i] { 1.0 } else { 0.0 }).collect();
    // Γ0 adjacency: node -> (neighbour, triangle of the edge)
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let edges = mesh.edges();
    let locator = (offset > 0.0).then(|| Locator::new(mesh.clone()));
    for b in mesh.boundary_edges().iter().filter(|b| b.tag == BoundaryTag::Gamma0) {
        let key = if b.nodes[0] < b.nodes[1] { b.nodes } else { [b.nodes[1], b.nodes[0]] };
        let e = edges
            .binary_search_by_key(&key, |e| e.nodes)
            .map_err(|_| Error::geometry("boundary edge missing from the edge list"))?;
        let mut t = edges[e].left;
        if let Some(loc) = &locator {
            let (p, q) = (mesh.node(b.nodes[0]), mesh.node(b.nodes[1]));
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let len = (q[0] - p[0]).hypot(q[1] - p[1]);
            let mut normal = [-(q[1] - p[1]) / len, (q[0] - p[0]) / len];
            let c = mesh.centroid(t);
            if (c[0] - mid[0]) * normal[0] + (c[1] - mid[1]) * normal[1] < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            let at = [mid[0] + offset * normal[0], mid[1] + offset * normal[1]];
            t = loc.locate(at).unwrap_or(t);
        }
        adj[b.nodes[0]].push((b.nodes[1], t));
        adj[b.nodes[1]].push((b.nodes[0], t));
    }
    let mut seen = vec![false; n];
    for start in 0..n {
        if !g1[start] || adj[start].is_empty() || seen[start] {
            continue;
        }
        // walk the Γ0 chain from its Γ1 end
        let mut chain = vec![start];
        let mut acc = vec![0.0];
        seen[start] = true;
        let mut cur = start;
        while let Some(&(next, t)) = adj[cur].iter().find(|(m, _)| !seen[*m]) {
            let (p, q) = (mesh.node(cur), mesh.node(next));
            let flux = d.get(t)[0] * (q[0] - p[0]) + d.get(t)[1] * (q[1] - p[1]);
            acc.push(acc.last().unwrap() + flux);
            chain.push(next);
            seen[next] = true;
            cur = next;
            if g2[next] {
                break;
            }
        }
        let total = *acc.last().unwrap();
        if !g2[cur] || !(total > 0.0) {
            return Err(Error::validation(
                "tangential current along an insulated side does not run from Γ1 to Γ2",
            ));
        }
        for (&i, a) in chain.iter().zip(&acc) {
            if !g1[i] && !g2[i] {
                values[i] = a / total;
            }
        }
    }
    Ok(values)
}

/// Solves `∇·[(εI + FFᵀ)∇u] = 0` with `u = x₂` on the boundary (scaled
/// to the domain's height).
pub fn solve_viscosity(f: &VectorField, eps: f64) -> Result<ScalarField> {
    let g = boundary_values(f, BoundaryData::Linear)?;
    solve_viscosity_with(f, eps, &g)
}

/// Same problem with nodal Dirichlet values `g` on every boundary node.
pub fn solve_viscosity_with(f: &VectorField, eps: f64, g: &[f64]) -> Result<ScalarField> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::validation("viscosity weight must be positive"));
    }
    let mesh = f.mesh();
    if g.len() != mesh.num_nodes() {
        return Err(Error::validation("boundary data needs one value per node"));
    }
    let mut sys = assemble_diffusion(mesh, |t| {
        let v = f.get(t);
        [[eps + v[0] * v[0], v[0] * v[1]], [v[0] * v[1], eps + v[1] * v[1]]]
    })?;
    for (i, on) in mesh.boundary_nodes().into_iter().enumerate() {
        if on {
            sys.set_dirichlet(i, g[i]);
        }
    }
    sys.solve()
}

/// `‖F·∇u‖_{L²}`.
pub fn transport_residual(f: &VectorField, u: &ScalarField) -> Result<f64> {
    same_mesh(f.mesh(), u.mesh())?;
    let mesh = f.mesh();
    Ok((0..mesh.num_triangles())
        .map(|t| {
            let (v, g) = (f.get(t), u.gradient_on(t));
            mesh.area(t) * (v[0] * g[0] + v[1] * g[1]).powi(2)
        })
        .sum::<f64>()
        .sqrt())
}

fn triangle_neighbours(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); mesh.num_triangles()];
    for e in mesh.edges() {
        if let Some(r) = e.right {
            nb[e.left].push(r);
            nb[r].push(e.left);
        }
    }
    nb
}

/// `σ = |D|² / (D·∇u)` per triangle, clipped. Degenerate triangles take
/// the value of the nearest valid triangle and are flagged.
pub fn recover_sigma(
    d: &VectorField,
    u: &ScalarField,
    clip: Bounds,
) -> Result<(ConductivityMap, Vec<bool>)> {
    same_mesh(d.mesh(), u.mesh())?;
    let mesh = d.mesh();
    let n = mesh.num_triangles();
    let norm2: Vec<f64> = d.values().iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
    let dots: Vec<f64> = (0..n)
        .map(|t| {
            let (v, g) = (d.get(t), u.gradient_on(t));
            v[0] * g[0] + v[1] * g[1]
        })
        .collect();
    let peak = norm2.iter().fold(0.0f64, |m, v| m.max(*v));
    let scale = (0..n)
        .map(|t| {
            let g = u.gradient_on(t);
            norm2[t].sqrt() * g[0].hypot(g[1])
        })
        .fold(0.0f64, f64::max);
    let mut sigma = vec![f64::NAN; n];
    let mut flagged = vec![false; n];
    for t in 0..n {
        if norm2[t] < DEGENERATE_FLOOR * peak || dots[t] <= DEGENERATE_FLOOR * scale {
            flagged[t] = true;
        } else {
            sigma[t] = clip.clamp(norm2[t] / dots[t]);
        }
    }
    let count = flagged.iter().filter(|f| **f).count();
    if count as f64 > MAX_DEGENERATE_FRACTION * n as f64 || count == n {
        return Err(Error::validation(format!(
            "{count} of {n} triangles have degenerate current data"
        )));
    }
    if count > 0 {
        log::debug!("{count} degenerate triangles filled from neighbours");
        let nb = triangle_neighbours(mesh);
        let mut queue: VecDeque<usize> = (0..n).filter(|&t| !flagged[t]).collect();
        while let Some(t) = queue.pop_front() {
            for &k in &nb[t] {
                if sigma[k].is_nan() {
                    sigma[k] = sigma[t];
                    queue.push_back(k);
                }
            }
        }
        if sigma.iter().any(|s| s.is_nan()) {
            return Err(Error::validation("degenerate region is not connected to valid data"));
        }
    }
    Ok((ConductivityMap::new(mesh.clone(), sigma, clip)?, flagged))
}

/// Per-triangle refinement indicator: `Σ |[σ]|·len` over its interior edges.
pub fn jump_indicator(sigma: &ConductivityMap) -> Vec<f64> {
    let mesh = sigma.mesh();
    let mut eta = vec![0.0; mesh.num_triangles()];
    for e in mesh.edges() {
        if let Some(r) = e.right {
            let j = (sigma.get(e.left) - sigma.get(r)).abs() * mesh.edge_length(e);
            eta[e.left] += j;
            eta[r] += j;
        }
    }
    eta
}

/// Marks the `fraction` of triangles with the largest indicator (ties go
/// to the lower index).
pub fn mark_top_fraction(indicator: &[f64], fraction: f64) -> Vec<bool> {
    let n = indicator.len();
    let count = ((fraction * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| indicator[b].total_cmp(&indicator[a]).then(a.cmp(&b)));
    let mut marked = vec![false; n];
    for &t in &order[..count] {
        marked[t] = true;
    }
    marked
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub eps: f64,
    /// `‖F·∇u_ε‖_{L²}`.
    pub residual: f64,
    pub error_if_known: Option<f64>,
    pub triangles: usize,
    pub flagged: usize,
    /// `min_T D_T·e₂`, a proxy for admissibility of the data.
    pub min_d2: f64,
}

#[derive(Clone, Debug)]
pub struct OrthoResult {
    pub u_eps: ScalarField,
    pub sigma_rec: ConductivityMap,
    /// Solver meshes of every round, starting with the input mesh.
    pub meshes: Vec<Arc<TriMesh>>,
    pub diagnostics: Vec<RoundDiagnostics>,
    pub wall_time: Duration,
}

impl OrthoResult {
    pub fn to_recon_result(&self) -> ReconResult {
        ReconResult {
            method: "orthofield".into(),
            sigma: self.sigma_rec.clone(),
            status: ReconStatus::Done,
            iterations: self.diagnostics.len(),
            final_objective: self.diagnostics.last().map_or(f64::NAN, |d| d.residual),
            history: self
                .diagnostics
                .iter()
                .map(|d| IterationRecord { iteration: d.round, objective: d.residual, step: 0.0, grad_norm: 0.0 })
                .collect(),
            wall_time: self.wall_time,
        }
    }

    /// `round,eps,residual,error_if_known`; the error column is empty when
    /// no reference was given.
    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "round,eps,residual,error_if_known")?;
        for d in &self.diagnostics {
            let err = d.error_if_known.map(|e| format!("{e:?}")).unwrap_or_default();
            writeln!(w, "{},{:?},{:?},{}", d.round, d.eps, d.residual, err)?;
        }
        Ok(())
    }
}

/// Reconstruction with `cfg.refine_rounds` refinements.
pub fn adaptive_reconstruct(d: &VectorField, cfg: &OrthoConfig) -> Result<OrthoResult> {
    adaptive_reconstruct_with_truth(d, cfg, None)
}

/// As [`adaptive_reconstruct`], recording the relative L² error against
/// `truth` (evaluated on the truth's mesh) after every round.
pub fn adaptive_reconstruct_with_truth(
    d: &VectorField,
    cfg: &OrthoConfig,
    truth: Option<&ConductivityMap>,
) -> Result<OrthoResult> {
    adaptive_reconstruct_resampled(d, cfg, truth, None)
}

/// Source of `D` on a refined mesh, e.g. re-evaluated from the measured
/// profiles.
pub type Resampler<'a> = &'a (dyn Fn(&Arc<TriMesh>) -> Result<VectorField> + Sync);

/// Full form: after each refinement `D` comes from `resample` when given,
/// otherwise every child triangle inherits its parent's value.
pub fn adaptive_reconstruct_resampled(
    d: &VectorField,
    cfg: &OrthoConfig,
    truth: Option<&ConductivityMap>,
    resample: Option<Resampler<'_>>,
) -> Result<OrthoResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut d = d.clone();
    let mut meshes = vec![d.mesh().clone()];
    let mut diagnostics = Vec::new();
    let mut round = 0;
    loop {
        let f = orthogonal_field(&d);
        let g = boundary_values_offset(&d, cfg.boundary, cfg.boundary_offset)?;
        let u = solve_viscosity_with(&f, cfg.epsilon, &g)?;
        let (sigma, flagged) = recover_sigma(&d, &u, cfg.sigma_clip)?;
        let error_if_known = match truth {
            Some(t) => Some(sigma.resample_onto(t.mesh())?.relative_l2_error(t)?),
            None => None,
        };
        let diag = RoundDiagnostics {
            round,
            eps: cfg.epsilon,
            residual: transport_residual(&f, &u)?,
            error_if_known,
            triangles: d.mesh().num_triangles(),
            flagged: flagged.iter().filter(|f| **f).count(),
            min_d2: d.values().iter().map(|v| v[1]).fold(f64::INFINITY, f64::min),
        };
        log::debug!("orthofield round {round}: {diag:?}");
        diagnostics.push(diag);
        if round == cfg.refine_rounds {
            return Ok(OrthoResult { u_eps: u, sigma_rec: sigma, meshes, diagnostics, wall_time: start.elapsed() });
        }
        let marked = mark_top_fraction(&jump_indicator(&sigma), cfg.refine_fraction);
        let refined = refine_with_parents(d.mesh(), &marked);
        let mesh = Arc::new(refined.mesh);
        d = match resample {
            Some(f) => {
                let next = f(&mesh)?;
                same_mesh(&mesh, next.mesh())?;
                next
            }
            None => VectorField::new(mesh.clone(), refined.parent.iter().map(|&p| d.get(p)).collect())?,
        };
        meshes.push(mesh);
        round += 1;
    }
}
