//! Forward model: potentials, Lorentz source and measurement curves.
//!
//! The induced current is `j_S = c_B σ v τ` with `τ = (−ξ₂, ξ₁)` and `c_B`
//! the pulse's `coupling` (1 by default).

mod io;
mod measure;
mod noise;
mod potential;
mod pulse;

pub use io::{measurements_to_string, read_measurements, write_measurements, HEADER};
pub use measure::{
    convolve_causal, measure, measure_all, measure_centroid, measure_with_current, sampled_kernel,
    BeamSamples, MeasureOptions, MeasurementSet, ZGrid,
};
pub use noise::add_noise;
pub use potential::{
    electrode_fluxes, electrode_intensity, solve_internal_potential,
    solve_internal_potential_unchecked, solve_virtual_potential,
    solve_virtual_potential_with, virtual_current,
};
pub use pulse::{bump, perp, BeamProfile, PulseProfile, PulseSpec};

use crate::mesh_fem::{ConductivityMap, VectorField};

/// Per-triangle `j_S(t)` with the velocity evaluated at centroids.
pub fn lorentz_source(sigma: &ConductivityMap, pulse: &PulseSpec, t: f64) -> VectorField {
    let mesh = sigma.mesh();
    let tau = pulse.tau();
    let values = (0..mesh.num_triangles())
        .map(|tri| {
            let s = pulse.coupling * sigma.get(tri) * pulse.velocity(mesh.centroid(tri), t);
            [s * tau[0], s * tau[1]]
        })
        .collect();
    VectorField::new(mesh.clone(), values).expect("one value per triangle")
}
