#![allow(dead_code)]

use std::sync::Arc;

use lorentz_eit::forward::{BeamProfile, PulseProfile, PulseSpec};
use lorentz_eit::mesh_fem::{Bounds, ConductivityMap, TriMesh};

pub fn domain(h: f64) -> Arc<TriMesh> {
    let n = (1.0 / h).round() as usize;
    Arc::new(TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 2 * n, n).unwrap())
}

pub fn bounds() -> Bounds {
    Bounds::new(1.0, 8.0).unwrap()
}

pub fn constant(mesh: &Arc<TriMesh>, s: f64) -> ConductivityMap {
    ConductivityMap::constant(mesh.clone(), s, Bounds::new(0.5, 10.0).unwrap()).unwrap()
}

/// Background 1 with a disk of 8 at (0.6, 0.5) and a rectangle of 4.
pub fn two_inclusions(mesh: &Arc<TriMesh>) -> ConductivityMap {
    let sigma = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.centroid(t);
            if (c[0] - 0.6).hypot(c[1] - 0.5) < 0.2 {
                8.0
            } else if (1.2..1.6).contains(&c[0]) && (0.3..0.7).contains(&c[1]) {
                4.0
            } else {
                1.0
            }
        })
        .collect();
    ConductivityMap::new(mesh.clone(), sigma, bounds()).unwrap()
}

pub fn pulse(origin: [f64; 2], angle: f64, eta: f64, radius: f64) -> PulseSpec {
    let (s, c) = angle.sin_cos();
    PulseSpec::new(
        origin,
        [c, s],
        PulseProfile::Bump { eta },
        BeamProfile::Bump { radius },
        1.0,
    )
    .unwrap()
}

pub fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

use lorentz_eit::forward::{measure_all, solve_virtual_potential, virtual_current, MeasureOptions, MeasurementSet, ZGrid};
use lorentz_eit::mesh_fem::VectorField;
use lorentz_eit::virtual_current::beam_fan;

pub const PHASE: f64 = 0.381_966_011_250_105;

/// Two perpendicular beam fans with spacing R/2 and clean curves.
pub fn two_fan_measurements(sigma: &ConductivityMap, radius: f64, eta: f64, dz: f64) -> MeasurementSet {
    let mesh = sigma.mesh();
    let template = pulse([0.0, 0.0], 0.0, eta, radius);
    let mut pulses = beam_fan(mesh, [1.0, 0.0], &template, radius / 2.0, PHASE).unwrap();
    pulses.extend(beam_fan(mesh, [0.0, 1.0], &template, radius / 2.0, PHASE).unwrap());
    let grid = ZGrid::covering(&pulses, mesh, dz).unwrap();
    measure_all(sigma, &pulses, grid, MeasureOptions::default()).unwrap()
}

pub fn true_current(sigma: &ConductivityMap) -> VectorField {
    virtual_current(sigma, &solve_virtual_potential(sigma).unwrap())
}

fn ramp(s: f64, width: f64) -> f64 {
    0.5 * (1.0 + (s / width).tanh())
}

/// `two_inclusions` with tanh edges of the given width.
pub fn smooth_inclusions(mesh: &Arc<TriMesh>, width: f64) -> ConductivityMap {
    let sigma = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.centroid(t);
            let disk = ramp(0.2 - (c[0] - 0.6).hypot(c[1] - 0.5), width);
            let rect = ramp(0.2 - (c[0] - 1.4).abs(), width) * ramp(0.2 - (c[1] - 0.5).abs(), width);
            1.0 + 7.0 * disk + 3.0 * rect * (1.0 - disk)
        })
        .collect();
    ConductivityMap::new(mesh.clone(), sigma, bounds()).unwrap()
}
