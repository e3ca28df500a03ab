mod common;

use std::sync::Arc;

use common::*;
use lorentz_eit::forward::solve_virtual_potential;
use lorentz_eit::mesh_fem::{BoundaryTag, Bounds, ConductivityMap, ScalarField, TriMesh, VectorField};
use lorentz_eit::recon_control::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn wide() -> Bounds {
    Bounds::new(0.1, 100.0).unwrap()
}

/// Smooth, nowhere-constant conductivity.
fn wavy(mesh: &Arc<TriMesh>) -> ConductivityMap {
    let sigma = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.centroid(t);
            2.0 + (3.0 * c[0]).sin() * (2.0 * c[1]).cos() + c[1]
        })
        .collect();
    ConductivityMap::new(mesh.clone(), sigma, wide()).unwrap()
}

fn perturbed(sigma: &ConductivityMap, h: &[f64], t: f64) -> ConductivityMap {
    let v = sigma.values().iter().zip(h).map(|(s, h)| s + t * h).collect();
    ConductivityMap::new(sigma.mesh().clone(), v, sigma.bounds()).unwrap()
}

fn integral(mesh: &TriMesh, f: impl Fn(usize) -> f64) -> f64 {
    (0..mesh.num_triangles()).map(|t| mesh.area(t) * f(t)).sum()
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Random P1 field vanishing on both electrodes.
fn test_field(mesh: &Arc<TriMesh>, rng: &mut ChaCha8Rng) -> ScalarField {
    let g1 = mesh.nodes_on(BoundaryTag::Gamma1);
    let g2 = mesh.nodes_on(BoundaryTag::Gamma2);
    let v = (0..mesh.num_nodes())
        .map(|i| if g1[i] || g2[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    ScalarField::new(mesh.clone(), v).unwrap()
}

fn noisy_current(d: &VectorField, level: f64, seed: u64) -> VectorField {
    let scale = d.values().iter().fold(0.0f64, |m, v| m.max(v[0].hypot(v[1])));
    let normal = Normal::new(0.0, level * scale).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = d.values().iter().map(|v| [v[0] + normal.sample(&mut rng), v[1] + normal.sample(&mut rng)]).collect();
    VectorField::new(d.mesh().clone(), v).unwrap()
}

#[test]
fn misfit_vanishes_at_exact_fit_and_scales_quadratically() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let d = true_current(&sigma);
    let norm = integral(&mesh, |t| dot(d.get(t), d.get(t)));
    assert!(evaluate_j(&sigma, &d).unwrap() <= 1e-16 * norm);

    let other = wavy(&mesh);
    let u = solve_virtual_potential(&other).unwrap();
    let j1 = evaluate_j_with(&other, &u, &d).unwrap();
    // D' = σ∇U + 2(D − σ∇U)
    let doubled = (0..mesh.num_triangles())
        .map(|t| {
            let (g, s, dt) = (u.gradient_on(t), other.get(t), d.get(t));
            [2.0 * dt[0] - s * g[0], 2.0 * dt[1] - s * g[1]]
        })
        .collect();
    let j2 = evaluate_j_with(&other, &u, &VectorField::new(mesh.clone(), doubled).unwrap()).unwrap();
    assert!((j2 / j1 - 4.0).abs() <= 1e-10, "{j2} vs 4 x {j1}");
}

#[test]
fn uniform_medium_without_data_gives_half_the_area() {
    let mesh = domain(0.1);
    let sigma = constant(&mesh, 1.0);
    let j = evaluate_j(&sigma, &VectorField::zeros(mesh.clone())).unwrap();
    assert!((j - 1.0).abs() <= 1e-12, "J = {j}");
}

#[test]
fn adjoint_vanishes_in_trivial_cases() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let u = solve_virtual_potential(&sigma).unwrap();
    let d = true_current(&sigma);
    let p = solve_adjoint(&sigma, &u, &d).unwrap();
    assert!(p.values().iter().all(|v| v.abs() <= 1e-12));
    assert!(gradient_j(&sigma, &u, &p, &d).unwrap().iter().all(|g| g.abs() <= 1e-10));

    let one = constant(&mesh, 1.0);
    let u = solve_virtual_potential(&one).unwrap();
    let p = solve_adjoint(&one, &u, &VectorField::zeros(mesh.clone())).unwrap();
    assert!(p.values().iter().all(|v| v.abs() <= 1e-12));
}

#[test]
fn adjoint_satisfies_its_weak_form() {
    let mesh = domain(0.05);
    let sigma = wavy(&mesh);
    let d = true_current(&two_inclusions(&mesh));
    let u = solve_virtual_potential(&sigma).unwrap();
    let p = solve_adjoint(&sigma, &u, &d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let phi = test_field(&mesh, &mut rng);
        let lhs = integral(&mesh, |t| sigma.get(t) * dot(p.gradient_on(t), phi.gradient_on(t)));
        let rhs = integral(&mesh, |t| {
            let (s, g, dt) = (sigma.get(t), u.gradient_on(t), d.get(t));
            dot([s * s * g[0] - s * dt[0], s * s * g[1] - s * dt[1]], phi.gradient_on(t))
        });
        assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn adjoint_is_consistent_with_the_derivative_of_f() {
    let mesh = domain(0.05);
    let sigma = wavy(&mesh);
    let d = true_current(&two_inclusions(&mesh));
    let u = solve_virtual_potential(&sigma).unwrap();
    let p = solve_adjoint(&sigma, &u, &d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let h: Vec<f64> = (0..mesh.num_triangles()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = frechet_derivative(&sigma, &u, &h).unwrap();
        let lhs = integral(&mesh, |t| sigma.get(t) * dot(p.gradient_on(t), v.gradient_on(t)));
        let rhs = integral(&mesh, |t| {
            let (s, g, dt) = (sigma.get(t), u.gradient_on(t), d.get(t));
            dot([s * s * g[0] - s * dt[0], s * s * g[1] - s * dt[1]], v.gradient_on(t))
        });
        assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-3), "{lhs} vs {rhs}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mesh = domain(0.05);
    let sigma = wavy(&mesh);
    let d = true_current(&two_inclusions(&mesh));
    let u = solve_virtual_potential(&sigma).unwrap();
    let p = solve_adjoint(&sigma, &u, &d).unwrap();
    let grad = gradient_j(&sigma, &u, &p, &d).unwrap();
    let j0 = evaluate_j_with(&sigma, &u, &d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let t = rng.random_range(0..mesh.num_triangles());
        let exact = mesh.area(t) * grad[t];
        let mut bump = vec![0.0; mesh.num_triangles()];
        bump[t] = 1.0;
        let fd = (evaluate_j(&perturbed(&sigma, &bump, 1e-5), &d).unwrap() - j0) / 1e-5;
        assert!((fd - exact).abs() <= 0.01 * exact.abs(), "triangle {t}: fd {fd} vs adjoint {exact}");
    }
    // constant direction
    let ones = vec![1.0; mesh.num_triangles()];
    let exact: f64 = grad.iter().zip(mesh.areas()).map(|(g, a)| g * a).sum();
    let fd = (evaluate_j(&perturbed(&sigma, &ones, 1e-5), &d).unwrap() - j0) / 1e-5;
    assert!((fd - exact).abs() <= 0.01 * exact.abs(), "fd {fd} vs adjoint {exact}");
}

#[test]
fn frechet_remainder_is_quadratic() {
    let mesh = domain(0.05);
    let sigma = wavy(&mesh);
    let u = solve_virtual_potential(&sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h: Vec<f64> = (0..mesh.num_triangles()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = frechet_derivative(&sigma, &u, &h).unwrap();
    let remainder = |t: f64| {
        let ut = solve_virtual_potential(&perturbed(&sigma, &h, t)).unwrap();
        let w: Vec<f64> = (0..mesh.num_nodes())
            .map(|i| ut.values()[i] - u.values()[i] - t * v.values()[i])
            .collect();
        ScalarField::new(mesh.clone(), w).unwrap().h1_norm()
    };
    let (r1, r2) = (remainder(0.2), remainder(0.1));
    let ratio = r1 / r2;
    assert!((3.5..=4.5).contains(&ratio), "remainder ratio {ratio} ({r1}, {r2})");
}

#[test]
fn tv_of_constant_map_is_the_smoothing_offset() {
    let mesh = domain(0.1);
    let sigma = constant(&mesh, 3.0);
    let delta = 1e-3;
    let (tv, grad) = tv_seminorm(&sigma, delta).unwrap();
    let interior: f64 = mesh.edges().iter().filter(|e| e.is_interior()).map(|e| mesh.edge_length(e)).sum();
    assert!((tv - delta * interior).abs() <= 1e-12 * interior);
    assert!(grad.iter().all(|g| *g == 0.0));
    assert!(tv_seminorm(&sigma, 0.0).is_err());
}

#[test]
fn tv_of_square_inclusion_tends_to_jump_times_perimeter() {
    let mesh = domain(0.05);
    let sigma = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.centroid(t);
            if (0.6..1.0).contains(&c[0]) && (0.3..0.7).contains(&c[1]) {
                4.0
            } else {
                1.0
            }
        })
        .collect();
    let sigma = ConductivityMap::new(mesh.clone(), sigma, bounds()).unwrap();
    let delta = 3.0 * 1e-3;
    let (tv, _) = tv_seminorm(&sigma, delta).unwrap();
    // remove the constant offset every interior edge carries
    let interior: f64 = mesh.edges().iter().filter(|e| e.is_interior()).map(|e| mesh.edge_length(e)).sum();
    let tv = tv - delta * interior;
    let expected = 3.0 * 1.6;
    assert!((tv - expected).abs() <= 0.01 * expected, "TV {tv} vs {expected}");
}

#[test]
fn tv_gradient_matches_finite_differences() {
    let mesh = domain(0.1);
    let sigma = wavy(&mesh);
    let delta = 0.05;
    let (tv0, grad) = tv_seminorm(&sigma, delta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let t = rng.random_range(0..mesh.num_triangles());
        let mut bump = vec![0.0; mesh.num_triangles()];
        bump[t] = 1.0;
        let (tv1, _) = tv_seminorm(&perturbed(&sigma, &bump, 1e-6), delta).unwrap();
        let fd = (tv1 - tv0) / 1e-6;
        assert!((fd - grad[t]).abs() <= 0.01 * grad[t].abs().max(1e-3), "triangle {t}: {fd} vs {}", grad[t]);
    }
}

#[test]
fn starting_at_the_truth_stops_immediately() {
    let mesh = domain(0.1);
    let sigma = two_inclusions(&mesh);
    let d = true_current(&sigma);
    let r = minimize(&sigma, &d, &ControlConfig::default()).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.status, ReconStatus::Converged);
    assert_eq!(r.sigma.values(), sigma.values());
}

#[test]
fn clean_two_inclusion_reconstruction() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let d = true_current(&sigma);
    let r = minimize(&initial_guess(&mesh, bounds()).unwrap(), &d, &ControlConfig::default()).unwrap();
    let err = r.sigma.relative_l2_error(&sigma).unwrap();
    assert!(r.iterations <= 200);
    assert!(err <= 0.15, "relative error {err}");
    assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
}

#[test]
fn more_noise_gives_a_worse_monotone_run() {
    let mesh = domain(0.05);
    let sigma = two_inclusions(&mesh);
    let d = true_current(&sigma);
    let cfg = ControlConfig { max_iters: 100, ..Default::default() };
    let s0 = initial_guess(&mesh, bounds()).unwrap();
    let mut errors = Vec::new();
    for level in [0.02, 0.2] {
        let r = minimize(&s0, &noisy_current(&d, level, 1), &cfg).unwrap();
        assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
        errors.push(r.sigma.relative_l2_error(&sigma).unwrap());
    }
    assert!(errors[0] < errors[1], "{errors:?}");
}

#[test]
fn tv_regularised_run_stays_in_bounds_and_decreases() {
    let mesh = domain(0.1);
    let sigma = two_inclusions(&mesh);
    let d = noisy_current(&true_current(&sigma), 0.05, 3);
    let cfg = ControlConfig { max_iters: 30, tv_epsilon: 1e-3, ..Default::default() };
    let r = minimize(&initial_guess(&mesh, bounds()).unwrap(), &d, &cfg).unwrap();
    assert!(r.sigma.values().iter().all(|s| bounds().contains(*s)));
    assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
    assert!(r.history.last().unwrap().objective < r.history[0].objective);
}

#[test]
fn result_files_have_expected_shape() {
    let mesh = domain(0.25);
    let sigma = constant(&mesh, 2.0);
    let r = minimize(&sigma, &true_current(&sigma), &ControlConfig::default()).unwrap();
    let mut buf = Vec::new();
    r.write_sigma_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("tri_id,sigma"));
    assert_eq!(text.lines().count(), mesh.num_triangles() + 1);
    let json: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
    assert_eq!(json["method"], "control");
    assert_eq!(json["iterations"], 0);
}

#[test]
fn invalid_configs_are_rejected() {
    let mesh = domain(0.25);
    let sigma = constant(&mesh, 2.0);
    let d = true_current(&sigma);
    for cfg in [
        ControlConfig { step_init: 0.0, ..Default::default() },
        ControlConfig { tv_epsilon: -1.0, ..Default::default() },
        ControlConfig { max_iters: 0, ..Default::default() },
        ControlConfig { tv_smoothing: Some(0.0), ..Default::default() },
    ] {
        assert!(minimize(&sigma, &d, &cfg).unwrap_err().is_validation());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn iterates_respect_bounds_and_never_increase_the_objective(
        low in 0.5f64..2.0,
        width in 0.5f64..6.0,
        seed in 0u64..1000,
        tv in prop_oneof![Just(0.0), 1e-4f64..1e-2],
    ) {
        let mesh = domain(0.25);
        let truth = two_inclusions(&mesh);
        let d = noisy_current(&true_current(&truth), 0.05, seed);
        let b = Bounds::new(low, low + width).unwrap();
        let cfg = ControlConfig { max_iters: 8, tv_epsilon: tv, ..Default::default() };
        let r = minimize(&initial_guess(&mesh, b).unwrap(), &d, &cfg).unwrap();
        prop_assert!(r.sigma.values().iter().all(|s| b.contains(*s)));
        prop_assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
    }
}
