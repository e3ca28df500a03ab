mod common;

use std::sync::Arc;

use common::{constant, domain, pulse, true_current, two_fan_measurements, two_inclusions, PHASE};
use lorentz_eit::forward::{BeamProfile, PulseSpec, ZGrid};
use lorentz_eit::mesh_fem::TriMesh;
use lorentz_eit::virtual_current::{
    beam_fan, build_directional_data, estimate_current, invert_gamma, write_current_csv, DeconvSettings,
    DirectionalData, SampleSite, DEFAULT_COND_CAP,
};

fn synthetic(mesh: &Arc<TriMesh>, direction: [f64; 2], d0: [f64; 2], g: f64) -> DirectionalData {
    let n = mesh.num_nodes();
    let tau = [-direction[1], direction[0]];
    let gamma = [g * tau[0], g * tau[1]];
    DirectionalData {
        mesh: mesh.clone(),
        direction,
        site: SampleSite::Nodes,
        psi: vec![gamma[0] * d0[0] + gamma[1] * d0[1]; n],
        gamma: vec![gamma; n],
        coverage: vec![true; n],
    }
}

#[test]
fn constant_current_is_recovered_exactly() {
    let mesh = domain(0.1);
    let d0 = [0.3, -1.7];
    let d1 = synthetic(&mesh, [1.0, 0.0], d0, 0.02);
    let d2 = synthetic(&mesh, [0.0, 1.0], d0, 0.03);
    let (v, sys) = invert_gamma(&[d1, d2], DEFAULT_COND_CAP).unwrap();
    assert!(v.values().iter().all(|x| (x[0] - d0[0]).abs() < 1e-10 && (x[1] - d0[1]).abs() < 1e-10));
    assert!(sys.flagged.iter().all(|f| !f));
}

#[test]
fn parallel_directions_are_rejected() {
    let mesh = domain(0.1);
    let d1 = synthetic(&mesh, [1.0, 0.0], [1.0, 1.0], 0.02);
    let d2 = synthetic(&mesh, [-1.0, 0.0], [1.0, 1.0], 0.02);
    assert!(invert_gamma(&[d1, d2], DEFAULT_COND_CAP).unwrap_err().is_validation());
}

#[test]
fn gamma_is_constant_inside_and_coverage_stops_at_the_fan() {
    let mesh = domain(0.05);
    let radius = 0.05;
    let template = pulse([0.0, 0.0], 0.0, 0.05, radius);
    // keep only the beams whose axes lie below x₂ = 0.5
    let fan: Vec<PulseSpec> = beam_fan(&mesh, [1.0, 0.0], &template, radius / 2.0, PHASE)
        .unwrap()
        .into_iter()
        .filter(|p| p.origin[1] < 0.5)
        .collect();
    let grid = ZGrid::covering(&fan, &mesh, 0.01).unwrap();
    let profiles = vec![vec![1.0; grid.n]; fan.len()];
    let d = build_directional_data(&mesh, &fan, &profiles, grid).unwrap();
    let full = BeamProfile::Bump { radius }.transverse_integral(0.0);
    for (i, p) in mesh.nodes().iter().enumerate() {
        if p[1] > 0.5 + radius {
            assert!(!d.coverage[i]);
        }
        if d.coverage[i] && p[1] > radius && p[1] < 0.5 - radius {
            assert!((d.gamma[i][1] - full).abs() < 1e-12 && d.gamma[i][0] == 0.0);
        }
    }
}

#[test]
fn uniform_medium_profiles_match_gamma() {
    let mesh = domain(0.05);
    let sigma = constant(&mesh, 1.0);
    let radius = 0.05;
    let set = two_fan_measurements(&sigma, radius, 0.05, 0.005);
    let horizontal: Vec<usize> = (0..set.len()).filter(|&i| set.pulses[i].direction == [1.0, 0.0]).collect();
    let pulses: Vec<PulseSpec> = horizontal.iter().map(|&i| set.pulses[i].clone()).collect();
    let profiles = lorentz_eit::virtual_current::deconvolve_set(&set, DeconvSettings::default()).unwrap();
    let profiles: Vec<Vec<f64>> = horizontal.iter().map(|&i| profiles[i].clone()).collect();
    let d = build_directional_data(&mesh, &pulses, &profiles, set.grid).unwrap();
    // τ = (0, 1) and σ∇U = (0, 1), so ψ = |γ|
    let mut checked = 0;
    for (i, p) in mesh.nodes().iter().enumerate() {
        let interior = p[0] > 0.1 && p[0] < 1.9 && p[1] > 0.1 && p[1] < 0.9;
        if interior && d.coverage[i] {
            assert!((d.psi[i] - d.gamma[i][1]).abs() <= 0.05 * d.gamma[i][1], "node {i}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

fn l1_error(radius: f64, h: f64, site: SampleSite) -> f64 {
    let mesh = domain(h);
    let sigma = two_inclusions(&mesh);
    let set = two_fan_measurements(&sigma, radius, 0.05, 0.005);
    let (v, _) = estimate_current(&mesh, &set, site, DeconvSettings::default(), DEFAULT_COND_CAP).unwrap();
    v.l1_distance(&true_current(&sigma)).unwrap()
}

#[test]
fn error_shrinks_linearly_with_beam_radius() {
    let errors: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&r| l1_error(r, 0.01, SampleSite::Nodes)).collect();
    for w in errors.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.3..=0.8).contains(&ratio), "ratio {ratio} from {errors:?}");
    }
}

#[test]
fn three_directions_do_no_worse_than_two() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let radius = 0.05;
    let mut set = two_fan_measurements(&sigma, radius, 0.05, 0.005);
    let two = estimate_current(&mesh, &set, SampleSite::Nodes, DeconvSettings::default(), DEFAULT_COND_CAP).unwrap().0;
    let template = pulse([0.0, 0.0], 0.0, 0.05, radius);
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let extra = beam_fan(&mesh, [diag, diag], &template, radius / 2.0, PHASE).unwrap();
    let grid = ZGrid::covering(&set.pulses.iter().cloned().chain(extra.iter().cloned()).collect::<Vec<_>>(), &mesh, 0.005).unwrap();
    let mut all = set.pulses.clone();
    all.extend(extra);
    set = lorentz_eit::forward::measure_all(&sigma, &all, grid, Default::default()).unwrap();
    let three = estimate_current(&mesh, &set, SampleSite::Nodes, DeconvSettings::default(), DEFAULT_COND_CAP).unwrap().0;
    let truth = true_current(&sigma);
    let (e2, e3) = (two.l1_distance(&truth).unwrap(), three.l1_distance(&truth).unwrap());
    assert!(e3 <= e2 * 1.05, "three directions {e3} vs two {e2}");
}

#[test]
fn swapping_directions_leaves_result_unchanged() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let set = two_fan_measurements(&sigma, 0.05, 0.05, 0.005);
    let profiles = lorentz_eit::virtual_current::deconvolve_set(&set, DeconvSettings::default()).unwrap();
    let groups = lorentz_eit::virtual_current::group_by_direction(&set.pulses);
    let data: Vec<DirectionalData> = groups
        .iter()
        .map(|g| {
            let ps: Vec<_> = g.iter().map(|&i| set.pulses[i].clone()).collect();
            let fs: Vec<_> = g.iter().map(|&i| profiles[i].clone()).collect();
            build_directional_data(&mesh, &ps, &fs, set.grid).unwrap()
        })
        .collect();
    let (a, _) = invert_gamma(&[data[0].clone(), data[1].clone()], DEFAULT_COND_CAP).unwrap();
    let (b, _) = invert_gamma(&[data[1].clone(), data[0].clone()], DEFAULT_COND_CAP).unwrap();
    let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x[0] - y[0]).abs() <= 1e-12 * scale && (x[1] - y[1]).abs() <= 1e-12 * scale);
    }
}

#[test]
fn current_csv_has_one_row_per_triangle() {
    let mesh = domain(0.25);
    let sigma = constant(&mesh, 2.0);
    let mut buf = Vec::new();
    write_current_csv(&true_current(&sigma), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), mesh.num_triangles() + 1);
    assert!(text.starts_with("tri_id,Dx,Dy\n0,"));
}
