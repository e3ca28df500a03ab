//! Internal current `D ≈ σ∇U` from deconvolved beam profiles.
//!
//! For a node `x` on the axis neighbourhood of a beam, the deconvolved
//! profile at the node's travel distance gives `ψ(x, ξ) ≈ γ(x, ξ)·σ∇U(x)`
//! with `γ = c_B (∫ A dr) τ(ξ)`. Two or more directions give a small
//! linear system per node.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconv::{estimate_snr, kernel_bandwidth, wiener_deconvolve, WienerConfig};
use crate::error::{Error, Result};
use crate::forward::{sampled_kernel, MeasurementSet, PulseSpec, ZGrid};
use crate::mesh_fem::{Locator, Point, TriMesh, VectorField};

pub const DEFAULT_COND_CAP: f64 = 1e3;
/// Largest share of flagged nodes [`invert_gamma`] tolerates.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

/// Parallel beams along `direction`, `spacing` apart, launched from just
/// outside the bounding box of `mesh` and covering all of it. Axis offsets
/// are `(i + phase)·spacing` from the first one; an irrational `phase`
/// keeps nodes of dyadically refined meshes off the midlines between axes.
pub fn beam_fan(mesh: &TriMesh, direction: [f64; 2], template: &PulseSpec, spacing: f64, phase: f64) -> Result<Vec<PulseSpec>> {
    if !(spacing > 0.0) {
        return Err(Error::validation("beam spacing must be positive"));
    }
    let probe = PulseSpec { origin: [0.0, 0.0], direction, ..template.clone() };
    probe.validate()?;
    let (lo, hi) = mesh.bounding_box();
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let (mut z0, mut r0, mut r1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in corners {
        let (z, r) = probe.beam_coords(c);
        z0 = z0.min(z);
        r0 = r0.min(r);
        r1 = r1.max(r);
    }
    let radius = template.beam.radius();
    let z_start = z0 - template.pulse.eta().max(spacing);
    let first = r0 - radius;
    let count = ((r1 + radius - first) / spacing).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let r = first + (i as f64 + phase) * spacing;
            PulseSpec { origin: probe.point_at(z_start, r), ..probe.clone() }
        })
        .collect())
}

/// Where `ψ` and `γ` are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSite {
    /// Mesh nodes; the nodal solution is averaged onto triangles.
    #[default]
    Nodes,
    /// Triangle centroids; no averaging.
    Centroids,
}

impl SampleSite {
    fn points(self, mesh: &TriMesh) -> Vec<Point> {
        match self {
            SampleSite::Nodes => mesh.nodes().to_vec(),
            SampleSite::Centroids => (0..mesh.num_triangles()).map(|t| mesh.centroid(t)).collect(),
        }
    }

    fn neighbours(self, mesh: &TriMesh) -> Vec<Vec<usize>> {
        match self {
            SampleSite::Nodes => mesh.node_neighbours(),
            SampleSite::Centroids => {
                let mut adj = vec![Vec::new(); mesh.num_triangles()];
                for e in mesh.edges() {
                    if let Some(r) = e.right {
                        adj[e.left].push(r);
                        adj[r].push(e.left);
                    }
                }
                adj
            }
        }
    }
}

/// `ψ`, `γ` and coverage of one direction at the sample sites of a mesh.
#[derive(Clone, Debug)]
pub struct DirectionalData {
    pub mesh: Arc<TriMesh>,
    pub site: SampleSite,
    pub direction: [f64; 2],
    pub psi: Vec<f64>,
    pub gamma: Vec<[f64; 2]>,
    pub coverage: Vec<bool>,
}

fn same_direction(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12
}

/// Linear interpolation of samples `f(z_j)`, `z_j = (j+1)Δz`.
fn interpolate(grid: ZGrid, samples: &[f64], z: f64) -> Option<f64> {
    let s = z / grid.dz - 1.0;
    if s < 0.0 || s > (grid.n - 1) as f64 {
        return None;
    }
    let j = (s.floor() as usize).min(grid.n.saturating_sub(2));
    if grid.n == 1 {
        return Some(samples[0]);
    }
    let f = s - j as f64;
    Some((1.0 - f) * samples[j] + f * samples[j + 1])
}

/// `∫ A dr` over the part of the transverse segment through `axis` that
/// lies in the mesh (the whole beam width for interior points).
fn footprint_weight(locator: &Locator, pulse: &PulseSpec, z: f64) -> f64 {
    let radius = pulse.beam.radius();
    let inside = |r: f64| locator.locate(pulse.point_at(z, r)).is_some();
    if inside(-radius) && inside(radius) {
        return pulse.beam.transverse_integral(z);
    }
    let n = 256;
    let dr = 2.0 * radius / n as f64;
    (0..n)
        .map(|l| -radius + (l as f64 + 0.5) * dr)
        .filter(|&r| inside(r))
        .map(|r| pulse.beam.eval(z, r.abs()) * dr)
        .sum()
}

/// Assigns every node to the nearest beam axis of one direction and reads
/// `ψ` off that beam's profile. Nodes equidistant from two axes, outside
/// every beam or beyond the sampled range are left uncovered.
pub fn build_directional_data(
    mesh: &Arc<TriMesh>,
    pulses: &[PulseSpec],
    profiles: &[Vec<f64>],
    grid: ZGrid,
) -> Result<DirectionalData> {
    build_directional_data_at(mesh, SampleSite::Nodes, pulses, profiles, grid)
}

/// [`build_directional_data`] at a chosen kind of sample site.
pub fn build_directional_data_at(
    mesh: &Arc<TriMesh>,
    site: SampleSite,
    pulses: &[PulseSpec],
    profiles: &[Vec<f64>],
    grid: ZGrid,
) -> Result<DirectionalData> {
    let first = pulses.first().ok_or_else(|| Error::validation("no pulses for this direction"))?;
    if pulses.len() != profiles.len() || profiles.iter().any(|p| p.len() != grid.n) {
        return Err(Error::validation("one profile of grid length per pulse required"));
    }
    for p in pulses {
        p.validate()?;
        if !same_direction(p.direction, first.direction) {
            return Err(Error::validation("pulses of one dataset must share their direction"));
        }
    }
    let tau = first.tau();
    let locator = Locator::new(mesh.clone());
    let points = site.points(mesh);
    let n = points.len();
    let (mut psi, mut gamma, mut coverage) = (vec![0.0; n], vec![[0.0; 2]; n], vec![false; n]);
    let mut ties = 0usize;
    for (i, &x) in points.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        let mut tie = false;
        for (p, pulse) in pulses.iter().enumerate() {
            let r = pulse.beam_coords(x).1.abs();
            match best {
                Some((_, b)) if (r - b).abs() <= 1e-12 * pulse.beam.radius() => tie = true,
                Some((_, b)) if r < b => {
                    best = Some((p, r));
                    tie = false;
                }
                None => best = Some((p, r)),
                _ => {}
            }
        }
        let Some((p, r)) = best else { continue };
        let pulse = &pulses[p];
        if r >= pulse.beam.radius() {
            continue;
        }
        if tie {
            ties += 1;
            continue;
        }
        let z = pulse.beam_coords(x).0;
        let Some(value) = interpolate(grid, &profiles[p], z) else { continue };
        let g = pulse.coupling * footprint_weight(&locator, pulse, z);
        psi[i] = value;
        gamma[i] = [g * tau[0], g * tau[1]];
        coverage[i] = g > 0.0;
    }
    if ties > 0 {
        log::warn!("{ties} sites lie midway between two beams of direction {:?}; left uncovered", first.direction);
    }
    Ok(DirectionalData { mesh: mesh.clone(), site, direction: first.direction, psi, gamma, coverage })
}

/// Per-node systems `Γ V = Ψ` and their solution.
#[derive(Clone, Debug)]
pub struct GammaSystem {
    pub directions: Vec<[f64; 2]>,
    /// Solution per sample site (filled values on flagged sites).
    pub site_values: Vec<[f64; 2]>,
    /// Condition number of `Γ` per site (∞ where uncovered).
    pub condition: Vec<f64>,
    /// Sites whose value came from neighbour averaging.
    pub flagged: Vec<bool>,
}

impl GammaSystem {
    pub fn flagged_fraction(&self) -> f64 {
        self.flagged.iter().filter(|&&f| f).count() as f64 / self.flagged.len().max(1) as f64
    }
}

/// Solves the 2×2 normal equations of `rows · V = rhs`; returns `V` and
/// the condition number of the row matrix.
fn least_squares(rows: &[[f64; 2]], rhs: &[f64]) -> Option<([f64; 2], f64)> {
    let (mut a, mut b, mut c, mut f0, mut f1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (g, &p) in rows.iter().zip(rhs) {
        a += g[0] * g[0];
        b += g[0] * g[1];
        c += g[1] * g[1];
        f0 += g[0] * p;
        f1 += g[1] * p;
    }
    let det = a * c - b * b;
    let tr = a + c;
    if !(det > 1e-300) {
        return None;
    }
    // eigenvalues of the Gram matrix
    let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let (lmax, lmin) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    let cond = if lmin > 0.0 { (lmax / lmin).sqrt() } else { f64::INFINITY };
    Some(([(c * f0 - b * f1) / det, (a * f1 - b * f0) / det], cond))
}

/// `V = Γ⁻¹Ψ` per node (least squares for more than two directions),
/// flagged nodes filled from their neighbours, then averaged onto
/// triangles.
pub fn invert_gamma(data: &[DirectionalData], cond_cap: f64) -> Result<(VectorField, GammaSystem)> {
    if data.len() < 2 {
        return Err(Error::validation("at least two directions are needed"));
    }
    let mesh = data[0].mesh.clone();
    let site = data[0].site;
    for d in &data[1..] {
        crate::mesh_fem::same_mesh(&mesh, &d.mesh)?;
        if d.site != site {
            return Err(Error::validation("directional data sampled at different sites"));
        }
    }
    let spread = data
        .iter()
        .flat_map(|a| data.iter().map(move |b| (a.direction[0] * b.direction[1] - a.direction[1] * b.direction[0]).abs()))
        .fold(0.0, f64::max);
    if spread < 1e-8 {
        return Err(Error::validation("beam directions are parallel; the Γ system is singular"));
    }
    let n = data[0].psi.len();
    let mut values = vec![[0.0; 2]; n];
    let mut condition = vec![f64::INFINITY; n];
    let mut flagged = vec![true; n];
    for i in 0..n {
        let (rows, rhs): (Vec<[f64; 2]>, Vec<f64>) =
            data.iter().filter(|d| d.coverage[i]).map(|d| (d.gamma[i], d.psi[i])).unzip();
        if rows.len() < 2 {
            continue;
        }
        if let Some((v, cond)) = least_squares(&rows, &rhs) {
            condition[i] = cond;
            if cond <= cond_cap {
                values[i] = v;
                flagged[i] = false;
            }
        }
    }
    let count = flagged.iter().filter(|&&f| f).count();
    if count as f64 > MAX_FLAGGED_FRACTION * n as f64 {
        return Err(Error::validation(format!(
            "{count} of {n} sample sites lack usable beam coverage (limit {:.0}%)",
            100.0 * MAX_FLAGGED_FRACTION
        )));
    }
    if count > 0 {
        log::warn!("{count} sample sites filled from neighbours");
        fill_from_neighbours(&site.neighbours(&mesh), &mut values, &flagged)?;
    }
    let field = match site {
        SampleSite::Nodes => node_to_triangle(&mesh, &values),
        SampleSite::Centroids => VectorField::new(mesh.clone(), values.clone())?,
    };
    Ok((field, GammaSystem { directions: data.iter().map(|d| d.direction).collect(), site_values: values, condition, flagged }))
}

/// Repeatedly replaces unknown sites by the mean of known neighbours.
fn fill_from_neighbours(neighbours: &[Vec<usize>], values: &mut [[f64; 2]], flagged: &[bool]) -> Result<()> {
    let mut known: Vec<bool> = flagged.iter().map(|f| !f).collect();
    loop {
        let mut updates = Vec::new();
        for i in (0..values.len()).filter(|&i| !known[i]) {
            let (mut s, mut k) = ([0.0; 2], 0);
            for &j in &neighbours[i] {
                if known[j] {
                    s[0] += values[j][0];
                    s[1] += values[j][1];
                    k += 1;
                }
            }
            if k > 0 {
                updates.push((i, [s[0] / k as f64, s[1] / k as f64]));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, v) in updates {
            values[i] = v;
            known[i] = true;
        }
    }
    if known.iter().all(|&k| k) {
        Ok(())
    } else {
        Err(Error::validation("no covered node to fill from"))
    }
}

fn node_to_triangle(mesh: &Arc<TriMesh>, values: &[[f64; 2]]) -> VectorField {
    let tv = mesh
        .triangles()
        .iter()
        .map(|tri| {
            let s = tri.iter().fold([0.0; 2], |s, &i| [s[0] + values[i][0], s[1] + values[i][1]]);
            [s[0] / 3.0, s[1] / 3.0]
        })
        .collect();
    VectorField::new(mesh.clone(), tv).expect("one value per triangle")
}

/// How each measurement curve is deconvolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeconvSettings {
    /// Fixed noise-to-signal ratio; `None` estimates it per curve, or
    /// uses `snr_floor` when the set carries no noise.
    pub snr: Option<f64>,
    /// Lower bound on the estimated ratio.
    pub snr_floor: f64,
    /// Estimate the ratio even for sets recorded as noise-free, e.g. ones
    /// read back from a file.
    pub always_estimate: bool,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        DeconvSettings { snr: None, snr_floor: 1e-12, always_estimate: false }
    }
}

/// Deconvolves every curve of a measurement set.
pub fn deconvolve_set(set: &MeasurementSet, settings: DeconvSettings) -> Result<Vec<Vec<f64>>> {
    set.pulses
        .par_iter()
        .zip(&set.curves)
        .map(|(pulse, curve)| {
            let kernel = sampled_kernel(pulse, set.grid.dz);
            let snr = match settings.snr {
                Some(s) => s,
                // curves recorded as exact need no estimate
                None if set.noise_level == 0.0 && !settings.always_estimate => settings.snr_floor,
                None => {
                    let band = kernel_bandwidth(&kernel, curve.len().max(kernel.len()));
                    estimate_snr(curve, band).max(settings.snr_floor)
                }
            };
            let cfg = WienerConfig { noise_variance: set.noise_level.powi(2), ..WienerConfig::with_snr(snr) };
            wiener_deconvolve(curve, &kernel, set.grid.dz, &cfg)
        })
        .collect()
}

/// Groups pulses by direction, in order of first appearance.
pub fn group_by_direction(pulses: &[PulseSpec]) -> Vec<Vec<usize>> {
    let mut groups: Vec<([f64; 2], Vec<usize>)> = Vec::new();
    for (i, p) in pulses.iter().enumerate() {
        match groups.iter_mut().find(|(d, _)| same_direction(*d, p.direction)) {
            Some((_, g)) => g.push(i),
            None => groups.push((p.direction, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Full chain from measurements to the current on `mesh`: deconvolution,
/// per-direction `ψ`/`γ`, and inversion.
pub fn estimate_current(
    mesh: &Arc<TriMesh>,
    set: &MeasurementSet,
    site: SampleSite,
    settings: DeconvSettings,
    cond_cap: f64,
) -> Result<(VectorField, GammaSystem)> {
    let profiles = deconvolve_set(set, settings)?;
    current_from_profiles(mesh, site, &set.pulses, &profiles, set.grid, cond_cap)
}

/// Same as [`estimate_current`] for profiles already in hand.
pub fn current_from_profiles(
    mesh: &Arc<TriMesh>,
    site: SampleSite,
    pulses: &[PulseSpec],
    profiles: &[Vec<f64>],
    grid: ZGrid,
    cond_cap: f64,
) -> Result<(VectorField, GammaSystem)> {
    let data = group_by_direction(pulses)
        .par_iter()
        .map(|g| {
            let ps: Vec<PulseSpec> = g.iter().map(|&i| pulses[i].clone()).collect();
            let fs: Vec<Vec<f64>> = g.iter().map(|&i| profiles[i].clone()).collect();
            build_directional_data_at(mesh, site, &ps, &fs, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    invert_gamma(&data, cond_cap)
}

/// Writes `tri_id,Dx,Dy` rows.
pub fn write_current_csv<W: Write>(field: &VectorField, mut w: W) -> Result<()> {
    writeln!(w, "tri_id,Dx,Dy")?;
    for (t, v) in field.values().iter().enumerate() {
        writeln!(w, "{t},{:?},{:?}", v[0], v[1])?;
    }
    Ok(())
}
