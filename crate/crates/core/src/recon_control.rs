//! Optimal-control reconstruction: minimise `J[σ] = ½∫|σ∇F[σ] − D|²`
//! (plus an optional smoothed total variation) by projected gradient
//! descent, with the gradient from an adjoint solve.
//!
//! `F[σ]` is the virtual potential. With `U = F[σ]` the adjoint state `p`
//! solves `∫σ∇p·∇φ = ∫(σ²∇U − σD)·∇φ` with `p = 0` on both electrodes, and
//! the derivative of `J` with respect to a per-triangle perturbation is
//! `∫_T (σ∇U − D − ∇p)·∇U`. For P1 elements this is the exact derivative of
//! the discrete functional, not only an approximation of it.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::solve_virtual_potential;
use crate::mesh_fem::{
    assemble_scalar_diffusion, same_mesh, BoundaryTag, ConductivityMap, ScalarField, TriMesh,
    VectorField,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub max_iters: usize,
    /// First trial step, in units of σ per unit gradient density.
    pub step_init: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    /// TV weight ε; 0 switches the regulariser off.
    pub tv_epsilon: f64,
    /// TV smoothing δ; `None` means `1e-3·(σ_high − σ_low)`.
    pub tv_smoothing: Option<f64>,
    /// Stop once the projected gradient's L² norm drops below this.
    pub grad_tol: f64,
    /// Trial step after an accepted one.
    pub step_rule: StepRule,
    /// Divide the gradient density by `|∇U|² + κ·max|∇U|²` per triangle.
    pub scaling: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Double the last accepted step.
    Doubling,
    /// Barzilai–Borwein step from the last two iterates.
    Spectral,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            max_iters: 200,
            step_init: 1.0,
            armijo_c: 1e-4,
            tv_epsilon: 0.0,
            tv_smoothing: None,
            grad_tol: 1e-8,
            step_rule: StepRule::Spectral,
            scaling: Some(1e-2),
        }
    }
}

/// Consecutive step halvings after which the line search gives up.
pub const MAX_BACKTRACKS: usize = 50;

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be positive (got {v})")))
            }
        };
        positive(self.step_init, "step_init")?;
        positive(self.armijo_c, "armijo_c")?;
        positive(self.grad_tol, "grad_tol")?;
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be positive"));
        }
        if !(self.tv_epsilon >= 0.0) || !self.tv_epsilon.is_finite() {
            return Err(Error::validation("tv_epsilon must be non-negative"));
        }
        if let Some(d) = self.tv_smoothing {
            positive(d, "tv_smoothing")?;
        }
        if self.armijo_c >= 1.0 {
            return Err(Error::validation("armijo_c must be below 1"));
        }
        Ok(())
    }

    fn delta(&self, sigma: &ConductivityMap) -> f64 {
        let b = sigma.bounds();
        self.tv_smoothing.unwrap_or_else(|| {
            let d = 1e-3 * (b.high - b.low);
            if d > 0.0 {
                d
            } else {
                1e-3 * b.low
            }
        })
    }
}

fn electrodes(mesh: &TriMesh) -> Vec<bool> {
    let g1 = mesh.nodes_on(BoundaryTag::Gamma1);
    let g2 = mesh.nodes_on(BoundaryTag::Gamma2);
    g1.iter().zip(&g2).map(|(a, b)| *a || *b).collect()
}

/// Solves `∫σ∇w·∇φ = ∫G·∇φ` with `w = 0` on Γ1 ∪ Γ2.
fn solve_with_flux(sigma: &ConductivityMap, flux: &[[f64; 2]]) -> Result<ScalarField> {
    let mesh = sigma.mesh();
    let mut sys = assemble_scalar_diffusion(mesh, sigma.values())?;
    sys.set_dirichlet_where(&electrodes(mesh), |_| 0.0);
    sys.add_flux_load(flux);
    sys.solve()
}

fn misfit(sigma: &ConductivityMap, u: &ScalarField, d: &VectorField) -> f64 {
    let mesh = sigma.mesh();
    (0..mesh.num_triangles())
        .map(|t| {
            let g = u.gradient_on(t);
            let s = sigma.get(t);
            let dt = d.get(t);
            0.5 * mesh.area(t) * ((s * g[0] - dt[0]).powi(2) + (s * g[1] - dt[1]).powi(2))
        })
        .sum()
}

/// `J[σ] = ½∫|σ∇F[σ] − D|²`.
pub fn evaluate_j(sigma: &ConductivityMap, d: &VectorField) -> Result<f64> {
    same_mesh(sigma.mesh(), d.mesh())?;
    let u = solve_virtual_potential(sigma)?;
    Ok(misfit(sigma, &u, d))
}

/// Misfit for an already solved `U = F[σ]`.
pub fn evaluate_j_with(sigma: &ConductivityMap, u: &ScalarField, d: &VectorField) -> Result<f64> {
    same_mesh(sigma.mesh(), d.mesh())?;
    same_mesh(sigma.mesh(), u.mesh())?;
    Ok(misfit(sigma, u, d))
}

/// Adjoint state `p`: `∇·(σ∇p) = ∇·(σ²∇U − σD)`, `p = 0` on Γ1 ∪ Γ2.
pub fn solve_adjoint(sigma: &ConductivityMap, u: &ScalarField, d: &VectorField) -> Result<ScalarField> {
    same_mesh(sigma.mesh(), d.mesh())?;
    same_mesh(sigma.mesh(), u.mesh())?;
    let flux: Vec<[f64; 2]> = (0..sigma.mesh().num_triangles())
        .map(|t| {
            let (s, g, dt) = (sigma.get(t), u.gradient_on(t), d.get(t));
            [s * (s * g[0] - dt[0]), s * (s * g[1] - dt[1])]
        })
        .collect();
    solve_with_flux(sigma, &flux)
}

/// Per-triangle gradient density `(σ∇U − D − ∇p)·∇U`. Multiply by the
/// triangle area to get `∂J/∂σ_T`.
pub fn gradient_j(
    sigma: &ConductivityMap,
    u: &ScalarField,
    p: &ScalarField,
    d: &VectorField,
) -> Result<Vec<f64>> {
    same_mesh(sigma.mesh(), d.mesh())?;
    same_mesh(sigma.mesh(), u.mesh())?;
    same_mesh(sigma.mesh(), p.mesh())?;
    Ok((0..sigma.mesh().num_triangles())
        .map(|t| {
            let (s, g, dt, gp) = (sigma.get(t), u.gradient_on(t), d.get(t), p.gradient_on(t));
            (s * g[0] - dt[0] - gp[0]) * g[0] + (s * g[1] - dt[1] - gp[1]) * g[1]
        })
        .collect())
}

/// Directional derivative `v = dF[σ](h)`: `∇·(σ∇v) = −∇·(h∇U)`, `v = 0` on
/// the electrodes, for a per-triangle perturbation `h`.
pub fn frechet_derivative(sigma: &ConductivityMap, u: &ScalarField, h: &[f64]) -> Result<ScalarField> {
    same_mesh(sigma.mesh(), u.mesh())?;
    if h.len() != sigma.mesh().num_triangles() {
        return Err(Error::validation("perturbation needs one value per triangle"));
    }
    let flux: Vec<[f64; 2]> = h
        .iter()
        .enumerate()
        .map(|(t, &ht)| {
            let g = u.gradient_on(t);
            [-ht * g[0], -ht * g[1]]
        })
        .collect();
    solve_with_flux(sigma, &flux)
}

fn tv_values(mesh: &TriMesh, sigma: &[f64], delta: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; sigma.len()];
    for e in mesh.edges() {
        let Some(r) = e.right else { continue };
        let l = e.left;
        let len = mesh.edge_length(e);
        let jump = sigma[l] - sigma[r];
        let s = (jump * jump + delta * delta).sqrt();
        value += len * s;
        grad[l] += len * jump / s;
        grad[r] -= len * jump / s;
    }
    (value, grad)
}

/// Smoothed total variation `Σ_interior edges len·√([σ]² + δ²)` and its
/// derivative with respect to each `σ_T`. A constant map gives `δ·Σ len`.
pub fn tv_seminorm(sigma: &ConductivityMap, delta: f64) -> Result<(f64, Vec<f64>)> {
    if !(delta > 0.0) {
        return Err(Error::validation("TV smoothing must be positive"));
    }
    Ok(tv_values(sigma.mesh(), sigma.values(), delta))
}

/// One record per accepted iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

/// Everything known about the current iterate.
#[derive(Clone, Debug)]
pub struct ControlState {
    pub sigma: ConductivityMap,
    pub u: ScalarField,
    pub p: ScalarField,
    /// Data misfit `J`, without the TV term.
    pub j_value: f64,
    /// Per-triangle gradient density of `J`.
    pub grad: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl ControlState {
    pub fn new(sigma: ConductivityMap, d: &VectorField) -> Result<Self> {
        same_mesh(sigma.mesh(), d.mesh())?;
        let u = solve_virtual_potential(&sigma)?;
        let p = solve_adjoint(&sigma, &u, d)?;
        let j_value = misfit(&sigma, &u, d);
        let grad = gradient_j(&sigma, &u, &p, d)?;
        Ok(ControlState { sigma, u, p, j_value, grad, history: Vec::new() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconStatus {
    Converged,
    MaxIterations,
    /// The line search found no decrease; the last iterate is returned.
    LineSearchStalled,
    /// Non-iterative method finished.
    Done,
}

/// Reconstructed conductivity plus a run summary.
#[derive(Clone, Debug)]
pub struct ReconResult {
    pub method: String,
    pub sigma: ConductivityMap,
    pub status: ReconStatus,
    pub iterations: usize,
    pub final_objective: f64,
    pub history: Vec<IterationRecord>,
    pub wall_time: Duration,
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    status: ReconStatus,
    iterations: usize,
    final_objective: f64,
    wall_time_s: f64,
    triangles: usize,
}

impl ReconResult {
    pub fn write_sigma_csv<W: Write>(&self, w: W) -> Result<()> {
        write_sigma_csv(&self.sigma, w)
    }

    pub fn summary_json(&self) -> String {
        let s = Summary {
            method: &self.method,
            status: self.status,
            iterations: self.iterations,
            final_objective: self.final_objective,
            wall_time_s: self.wall_time.as_secs_f64(),
            triangles: self.sigma.mesh().num_triangles(),
        };
        serde_json::to_string_pretty(&s).expect("summary serialises")
    }
}

/// `tri_id,sigma` with one row per triangle.
pub fn write_sigma_csv<W: Write>(sigma: &ConductivityMap, mut w: W) -> Result<()> {
    writeln!(w, "tri_id,sigma")?;
    for (t, s) in sigma.values().iter().enumerate() {
        writeln!(w, "{t},{s:?}")?;
    }
    Ok(())
}

/// Total derivative of `J + ε·TV` per triangle, and the objective value.
fn objective_and_gradient(state: &ControlState, cfg: &ControlConfig, delta: f64) -> (f64, Vec<f64>) {
    let mesh = state.sigma.mesh();
    let mut g: Vec<f64> = state.grad.iter().zip(mesh.areas()).map(|(g, a)| g * a).collect();
    let mut obj = state.j_value;
    if cfg.tv_epsilon > 0.0 {
        let (tv, tg) = tv_values(mesh, state.sigma.values(), delta);
        obj += cfg.tv_epsilon * tv;
        g.iter_mut().zip(&tg).for_each(|(a, b)| *a += cfg.tv_epsilon * b);
    }
    (obj, g)
}

/// L² norm of the gradient density with components that push against an
/// active bound removed.
fn projected_norm(sigma: &ConductivityMap, total: &[f64]) -> f64 {
    let b = sigma.bounds();
    let mesh = sigma.mesh();
    let mut sum = 0.0;
    for (t, &g) in total.iter().enumerate() {
        let s = sigma.get(t);
        let blocked = (s <= b.low && g > 0.0) || (s >= b.high && g < 0.0);
        if !blocked {
            let a = mesh.area(t);
            sum += g * g / a;
        }
    }
    sum.sqrt()
}

/// Per-triangle metric weights: 1, or `|∇U|² + κ·max|∇U|²` when scaling.
fn metric(state: &ControlState, cfg: &ControlConfig) -> Vec<f64> {
    let n = state.sigma.mesh().num_triangles();
    match cfg.scaling {
        None => vec![1.0; n],
        Some(kappa) => {
            let g2: Vec<f64> = (0..n)
                .map(|t| {
                    let g = state.u.gradient_on(t);
                    g[0] * g[0] + g[1] * g[1]
                })
                .collect();
            let peak = g2.iter().fold(0.0f64, |m, v| m.max(*v));
            g2.iter().map(|v| v + kappa * peak).collect()
        }
    }
}

/// Projected gradient descent with Armijo backtracking on `J + ε·TV`.
///
/// The search direction is the L² gradient density, optionally divided by
/// the metric of `cfg.scaling`, so steps do not depend on the mesh size.
pub fn minimize(sigma0: &ConductivityMap, d: &VectorField, cfg: &ControlConfig) -> Result<ReconResult> {
    cfg.validate()?;
    if let Some(k) = cfg.scaling {
        if !(k > 0.0) {
            return Err(Error::validation("scaling floor must be positive"));
        }
    }
    let start = Instant::now();
    let delta = cfg.delta(sigma0);
    let areas = sigma0.mesh().areas().to_vec();
    let mut state = ControlState::new(sigma0.clone(), d)?;
    let (mut obj, mut total) = objective_and_gradient(&state, cfg, delta);
    let mut gnorm = projected_norm(&state.sigma, &total);
    state.history.push(IterationRecord { iteration: 0, objective: obj, step: 0.0, grad_norm: gnorm });
    let mut step = cfg.step_init;
    let mut status = ReconStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if gnorm < cfg.grad_tol {
            status = ReconStatus::Converged;
            break;
        }
        let weights = metric(&state, cfg);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = (0..areas.len())
                .map(|t| state.sigma.get(t) - step * total[t] / (areas[t] * weights[t]))
                .collect();
            let trial = state.sigma.with_values_clamped(trial);
            let decrease: f64 = trial
                .values()
                .iter()
                .zip(state.sigma.values())
                .zip(&total)
                .map(|((n, o), g)| g * (n - o))
                .sum();
            if decrease >= 0.0 {
                // every component is pinned at a bound
                break;
            }
            let next = ControlState::new(trial, d)?;
            let (next_obj, next_total) = objective_and_gradient(&next, cfg, delta);
            if next_obj <= obj + cfg.armijo_c * decrease {
                accepted = Some((next, next_obj, next_total));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_obj, next_total)) = accepted else {
            log::warn!("line search stalled after {iterations} iterations (objective {obj:e})");
            status = ReconStatus::LineSearchStalled;
            break;
        };
        iterations += 1;
        let taken = step;
        step = match cfg.step_rule {
            StepRule::Doubling => 2.0 * step,
            StepRule::Spectral => {
                let (mut ss, mut sy) = (0.0, 0.0);
                for t in 0..areas.len() {
                    let s = next.sigma.get(t) - state.sigma.get(t);
                    let y = (next_total[t] - total[t]) / areas[t];
                    ss += areas[t] * weights[t] * s * s;
                    sy += areas[t] * s * y;
                }
                if sy > 0.0 && ss > 0.0 {
                    (ss / sy).clamp(1e-6 * cfg.step_init, 1e6 * cfg.step_init)
                } else {
                    2.0 * step
                }
            }
        };
        let history = std::mem::take(&mut state.history);
        state = next;
        state.history = history;
        obj = next_obj;
        total = next_total;
        gnorm = projected_norm(&state.sigma, &total);
        state.history.push(IterationRecord { iteration: iterations, objective: obj, step: taken, grad_norm: gnorm });
        log::debug!("iteration {iterations}: objective {obj:e}, step {taken:e}, |grad| {gnorm:e}");
    }
    if status == ReconStatus::MaxIterations && gnorm < cfg.grad_tol {
        status = ReconStatus::Converged;
    }
    Ok(ReconResult {
        method: "control".into(),
        sigma: state.sigma,
        status,
        iterations,
        final_objective: obj,
        history: state.history,
        wall_time: start.elapsed(),
    })
}

/// Starting guess: the midpoint of the bounds everywhere.
pub fn initial_guess(mesh: &std::sync::Arc<TriMesh>, bounds: crate::mesh_fem::Bounds) -> Result<ConductivityMap> {
    ConductivityMap::constant(mesh.clone(), bounds.midpoint(), bounds)
}
