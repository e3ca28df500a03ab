//! Measurement curves `M(z) = ∫ v(x, z/c) σ∇U(x)·τ dx`.
//!
//! The integral is evaluated on a beam-aligned tensor grid: travel
//! distances `z'_j = (j+1)Δz` (the same grid as the measurement samples)
//! times `radial_points` midpoint offsets across the beam width. `σ∇U` is
//! looked up by point location, so beams much thinner than the mesh are
//! still resolved. Because `v(x, z/c) = W(z − z') A(z', r)`, the same
//! samples give both the direct time-domain sum and the factored form
//! `M = W ⋆ Φ` with `Φ(z') = ∫ A σ∇U·τ dr`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pulse::PulseSpec;
use super::potential::{solve_virtual_potential, virtual_current};
use crate::error::{Error, Result};
use crate::mesh_fem::{ConductivityMap, Locator, TriMesh, VectorField};

/// Uniform samples `z_k = (k+1)Δz`, `k < n`, of travel distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    pub dz: f64,
    pub n: usize,
}

impl ZGrid {
    pub fn new(dz: f64, n: usize) -> Result<Self> {
        if !(dz > 0.0) || !dz.is_finite() || n == 0 {
            return Err(Error::validation("z grid needs Δz > 0 and at least one sample"));
        }
        Ok(ZGrid { dz, n })
    }

    /// Grid long enough for every pulse to cross the whole mesh and leave
    /// it by a full pulse length.
    pub fn covering(pulses: &[PulseSpec], mesh: &TriMesh, dz: f64) -> Result<Self> {
        let (lo, hi) = mesh.bounding_box();
        let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
        let mut z_max: f64 = 0.0;
        for p in pulses {
            for c in corners {
                z_max = z_max.max(p.beam_coords(c).0 + p.pulse.eta());
            }
        }
        // trailing zeros so a deconvolution taper never reaches the signal
        let n = (z_max / dz).ceil() as usize + 2;
        ZGrid::new(dz, (n + n.div_ceil(12)).max(1))
    }

    pub fn z(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dz
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.z(k)).collect()
    }

    pub fn z_max(&self) -> f64 {
        self.z(self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    /// Midpoint samples across the beam diameter.
    pub radial_points: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions { radial_points: 16 }
    }
}

/// `σ∇U·τ` sampled on one beam's tensor grid.
/// Sub-samples per radial cell on rows cut by the boundary.
const EDGE_SUBSAMPLES: usize = 16;

#[derive(Clone, Debug)]
pub struct BeamSamples {
    pulse: PulseSpec,
    grid: ZGrid,
    offsets: Vec<f64>,
    dr: f64,
    /// row-major `[j][l]`
    dtau: Vec<f64>,
}

impl BeamSamples {
    pub fn sample(
        current: &VectorField,
        locator: &Locator,
        pulse: &PulseSpec,
        grid: ZGrid,
        opts: MeasureOptions,
    ) -> Result<Self> {
        if opts.radial_points < 2 {
            return Err(Error::validation("need at least 2 radial points per beam"));
        }
        pulse.validate()?;
        let radius = pulse.beam.radius();
        let nr = opts.radial_points;
        let dr = 2.0 * radius / nr as f64;
        let offsets: Vec<f64> = (0..nr).map(|l| -radius + (l as f64 + 0.5) * dr).collect();
        let tau = pulse.tau();
        let at = |z: f64, r: f64| {
            locator.locate(pulse.point_at(z, r)).map(|t| {
                let d = current.get(t);
                d[0] * tau[0] + d[1] * tau[1]
            })
        };
        let mut dtau = vec![0.0; grid.n * nr];
        for j in 0..grid.n {
            let z = grid.z(j);
            let row: Vec<Option<f64>> = offsets.iter().map(|&r| at(z, r)).collect();
            let inside = row.iter().filter(|v| v.is_some()).count();
            for (l, v) in row.iter().enumerate() {
                dtau[j * nr + l] = if inside == 0 || inside == nr {
                    v.unwrap_or(0.0)
                } else {
                    // the boundary cuts this row: average sub-cells so the
                    // cut is resolved finer than dr
                    let r0 = offsets[l] - 0.5 * dr;
                    let sub = EDGE_SUBSAMPLES as f64;
                    (0..EDGE_SUBSAMPLES)
                        .filter_map(|k| at(z, r0 + (k as f64 + 0.5) * dr / sub))
                        .sum::<f64>()
                        / sub
                };
            }
        }
        Ok(BeamSamples { pulse: pulse.clone(), grid, offsets, dr, dtau })
    }

    pub fn grid(&self) -> ZGrid {
        self.grid
    }

    /// False if no sample point of the beam fell inside the mesh.
    pub fn hits_domain(&self) -> bool {
        self.dtau.iter().any(|&v| v != 0.0)
    }

    /// `Φ(z'_j) = c_B ∫ A(z'_j, r) σ∇U·τ dr` on the grid.
    pub fn profile(&self) -> Vec<f64> {
        let nr = self.offsets.len();
        (0..self.grid.n)
            .map(|j| {
                let z = self.grid.z(j);
                let s: f64 = self
                    .offsets
                    .iter()
                    .enumerate()
                    .map(|(l, &r)| self.pulse.beam.eval(z, r.abs()) * self.dtau[j * nr + l])
                    .sum();
                self.pulse.coupling * s * self.dr
            })
            .collect()
    }

    /// `M(z_k)` summing `v(x, z_k/c) σ∇U·τ` over the sample points.
    pub fn time_domain(&self) -> Vec<f64> {
        let nr = self.offsets.len();
        let (dz, c) = (self.grid.dz, self.pulse.speed);
        let span = (self.pulse.pulse.eta() / dz).ceil() as usize + 1;
        (0..self.grid.n)
            .map(|k| {
                let t = self.grid.z(k) / c;
                let mut m = 0.0;
                for j in k.saturating_sub(span)..=k.min(self.grid.n - 1) {
                    let z = self.grid.z(j);
                    for (l, &r) in self.offsets.iter().enumerate() {
                        let d = self.dtau[j * nr + l];
                        if d != 0.0 {
                            m += self.pulse.velocity(self.pulse.point_at(z, r), t) * d;
                        }
                    }
                }
                self.pulse.coupling * m * dz * self.dr
            })
            .collect()
    }

    /// `M = W ⋆ Φ` as a discrete causal convolution on the grid.
    pub fn factored(&self) -> Vec<f64> {
        let phi = self.profile();
        let kernel = sampled_kernel(&self.pulse, self.grid.dz);
        convolve_causal(&kernel, &phi, self.grid.dz)
    }
}

/// `W(mΔz) = w(−mΔz)` for `m = 0, …` up to the end of the support.
pub fn sampled_kernel(pulse: &PulseSpec, dz: f64) -> Vec<f64> {
    let len = (pulse.pulse.eta() / dz).ceil() as usize + 1;
    (0..len).map(|m| pulse.kernel(m as f64 * dz)).collect()
}

/// `out_k = Δz Σ_m kernel_m x_{k−m}`, truncated to the length of `x`.
pub fn convolve_causal(kernel: &[f64], x: &[f64], dz: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let s: f64 = kernel.iter().enumerate().take(k + 1).map(|(m, w)| w * x[k - m]).sum();
            s * dz
        })
        .collect()
}

/// Curve for one pulse from a precomputed `σ∇U`.
pub fn measure_with_current(
    current: &VectorField,
    locator: &Locator,
    pulse: &PulseSpec,
    grid: ZGrid,
    opts: MeasureOptions,
) -> Result<Vec<f64>> {
    let samples = BeamSamples::sample(current, locator, pulse, grid, opts)?;
    if !samples.hits_domain() {
        log::warn!(
            "pulse from {:?} along {:?} never meets the domain; curve is zero",
            pulse.origin,
            pulse.direction
        );
    }
    Ok(samples.time_domain())
}

/// Solves for `U` and returns the sampled curve of one pulse.
pub fn measure(sigma: &ConductivityMap, pulse: &PulseSpec, grid: ZGrid) -> Result<Vec<f64>> {
    let u = solve_virtual_potential(sigma)?;
    let current = virtual_current(sigma, &u);
    let locator = Locator::new(sigma.mesh().clone());
    measure_with_current(&current, &locator, pulse, grid, MeasureOptions::default())
}

/// Centroid-rule variant: `M(z_k) = c_B Σ_T |T| v(c_T, z_k/c) σ_T∇U_T·τ`.
/// It is the exact counterpart of [`super::lorentz_source`], so it matches
/// the electrode intensity of the internal problem.
pub fn measure_centroid(current: &VectorField, pulse: &PulseSpec, grid: ZGrid) -> Vec<f64> {
    let mesh = current.mesh();
    let tau = pulse.tau();
    (0..grid.n)
        .map(|k| {
            let t = grid.z(k) / pulse.speed;
            let mut m = 0.0;
            for tri in 0..mesh.num_triangles() {
                let v = pulse.velocity(mesh.centroid(tri), t);
                if v != 0.0 {
                    let d = current.get(tri);
                    m += mesh.area(tri) * v * (d[0] * tau[0] + d[1] * tau[1]);
                }
            }
            pulse.coupling * m
        })
        .collect()
}

/// Sampled curves for a list of pulses sharing one z grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub pulses: Vec<PulseSpec>,
    pub grid: ZGrid,
    pub curves: Vec<Vec<f64>>,
    /// Standard deviation of the added noise, 0 for clean data.
    pub noise_level: f64,
}

impl MeasurementSet {
    pub fn new(pulses: Vec<PulseSpec>, grid: ZGrid, curves: Vec<Vec<f64>>, noise_level: f64) -> Result<Self> {
        if pulses.len() != curves.len() {
            return Err(Error::validation("one curve per pulse required"));
        }
        if curves.iter().any(|c| c.len() != grid.n) {
            return Err(Error::validation("curve length differs from the z grid"));
        }
        if curves.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("measurement values must be finite"));
        }
        if !(noise_level >= 0.0) {
            return Err(Error::validation("noise level must be non-negative"));
        }
        Ok(MeasurementSet { pulses, grid, curves, noise_level })
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Largest absolute sample over all curves.
    pub fn max_abs(&self) -> f64 {
        self.curves.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Synthesizes clean curves for every pulse; `U` is solved once and the
/// pulses are processed in parallel.
pub fn measure_all(
    sigma: &ConductivityMap,
    pulses: &[PulseSpec],
    grid: ZGrid,
    opts: MeasureOptions,
) -> Result<MeasurementSet> {
    let u = solve_virtual_potential(sigma)?;
    let current = virtual_current(sigma, &u);
    let locator = Locator::new(sigma.mesh().clone());
    let curves = pulses
        .par_iter()
        .map(|p| measure_with_current(&current, &locator, p, grid, opts))
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(pulses.to_vec(), grid, curves, 0.0)
}
