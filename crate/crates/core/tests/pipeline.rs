use std::f64::consts::PI;

use lorentz_eit::mesh_fem::Bounds;
use lorentz_eit::pipeline::*;
use lorentz_eit::Error;

/// Coarse meshes and a short control budget keep closed-loop tests quick.
const SMALL: &str = r#"
seed = 11
[mesh]
data_h = 0.02
solver_h = 0.05
[control]
max_iters = 20
"#;

/// `top` holds top-level keys, `tables` further sections.
fn small(top: &str, tables: &str) -> RunConfig {
    RunConfig::parse(&format!("{top}\n{SMALL}\n{tables}")).unwrap()
}

const DISK: &str = "[[phantom.shapes]]\nkind = \"disk\"\ncenter = [0.8, 0.5]\nradius = 0.2\nsigma = 4.0";

fn disk(center: [f64; 2], radius: f64, sigma: f64) -> Shape {
    Shape::Disk { center, radius, sigma }
}

#[test]
fn empty_text_gives_defaults() {
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.method, MethodChoice::Both);
    assert!(cfg.mesh.solver_h >= MIN_MESH_RATIO * cfg.mesh.data_h);
}

#[test]
fn config_text_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.noise_levels = vec![0.0, 0.02];
    cfg.phantom.transition = 0.02;
    cfg.phantom.shapes = vec![
        disk([0.6, 0.5], 0.2, 8.0),
        Shape::Rectangle { min: [1.2, 0.3], max: [1.6, 0.7], sigma: 4.0 },
    ];
    cfg.deconv.snr = Some(1e-3);
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn sections_and_arrays_of_shapes_parse() {
    let cfg = RunConfig::parse(
        r#"
noise_levels = [0.0, 0.2]
method = "orthofield"

[phantom]
background = 2.0

[[phantom.shapes]]
kind = "disk"
center = [0.6, 0.5]
radius = 0.2
sigma = 8.0

[orthofield]
epsilon = 1e-4
"#,
    )
    .unwrap();
    assert_eq!(cfg.method, MethodChoice::Orthofield);
    assert_eq!(cfg.phantom.background, 2.0);
    assert_eq!(cfg.phantom.shapes, vec![disk([0.6, 0.5], 0.2, 8.0)]);
    assert_eq!(cfg.orthofield.epsilon, 1e-4);
    assert_eq!(cfg.orthofield.refine_rounds, 2);
}

#[test]
fn parse_errors_carry_the_line() {
    match RunConfig::parse("seed = 1\n[mesh]\ndata_h = \"fine\"\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(RunConfig::parse("[mesh]\ncolour = 3\n"), Err(Error::Parse { .. })));
    assert!(matches!(RunConfig::parse("method = \"simplex\"\n"), Err(Error::Parse { .. })));
    assert!(matches!(RunConfig::parse("seed = \n"), Err(Error::Parse { .. })));
}

#[test]
fn invalid_configs_are_rejected() {
    for text in [
        "[mesh]\ndata_h = 0.02\nsolver_h = 0.025\n",
        "[mesh]\ndata_h = 0.0\n",
        "noise_levels = []\n",
        "noise_levels = [-0.1]\n",
        "[pulses]\ndirections = [[1.0, 0.0]]\n",
        "[pulses]\nradius = 0.0\n",
        "[deconv]\nsnr = -1.0\n",
        "[orthofield]\nepsilon = 0.0\n",
        "[control]\nmax_iters = 0\n",
        "[phantom]\nbackground = 9.0\n",
    ] {
        let err = RunConfig::parse(text).unwrap_err();
        assert!(err.is_validation(), "{text}: {err}");
    }
    let err = RunConfig::parse("[geometry]\nwidth = -2.0\n").unwrap_err();
    assert!(matches!(err, Error::Geometry(_)));
}

#[test]
fn shapes_must_keep_clear_of_the_boundary() {
    let g = Geometry::default();
    let base = PhantomSpec::default();
    let ok = PhantomSpec { shapes: vec![disk([1.0, 0.5], 0.3, 4.0)], ..base.clone() };
    assert!(ok.validate(g).is_ok());
    for shape in [
        disk([1.0, 0.15], 0.1, 4.0),
        disk([1.0, 0.85], 0.1, 4.0),
        disk([0.15, 0.5], 0.1, 4.0),
        Shape::Rectangle { min: [0.5, 0.0], max: [0.9, 0.5], sigma: 4.0 },
        disk([1.0, 0.5], 0.2, 20.0),
        disk([1.0, 0.5], 0.0, 4.0),
    ] {
        let spec = PhantomSpec { shapes: vec![shape.clone()], ..base.clone() };
        assert!(spec.validate(g).is_err(), "{shape:?}");
    }
}

#[test]
fn method_choice_parses() {
    assert_eq!(MethodChoice::parse("both").unwrap().methods(), vec![Method::Control, Method::Orthofield]);
    assert_eq!(MethodChoice::parse("control").unwrap().methods(), vec![Method::Control]);
    assert_eq!(MethodChoice::parse("orthofield").unwrap().methods(), vec![Method::Orthofield]);
    assert!(MethodChoice::parse("Both").is_err());
}

#[test]
fn empty_phantom_is_background() {
    let cfg = RunConfig::default();
    let mesh = cfg.data_mesh().unwrap();
    let sigma = make_phantom(&cfg.phantom, cfg.geometry, &mesh).unwrap();
    assert!(sigma.values().iter().all(|s| *s == 1.0));
}

#[test]
fn disk_area_fraction_matches() {
    let mut cfg = RunConfig::default();
    cfg.mesh.data_h = 0.02;
    cfg.phantom.shapes = vec![disk([0.7, 0.5], 0.25, 8.0)];
    let mesh = cfg.data_mesh().unwrap();
    let sigma = make_phantom(&cfg.phantom, cfg.geometry, &mesh).unwrap();
    let area: f64 = (0..mesh.num_triangles()).filter(|&t| sigma.get(t) == 8.0).map(|t| mesh.area(t)).sum();
    let exact = PI * 0.25 * 0.25;
    assert!((area - exact).abs() <= 0.02 * exact, "{area} vs {exact}");
    assert!(sigma.values().iter().all(|s| *s == 1.0 || *s == 8.0));
}

#[test]
fn later_shapes_win() {
    let spec = PhantomSpec {
        shapes: vec![
            Shape::Rectangle { min: [0.4, 0.3], max: [1.0, 0.7], sigma: 3.0 },
            disk([1.0, 0.5], 0.15, 6.0),
        ],
        ..Default::default()
    };
    assert_eq!(spec.eval([0.5, 0.5]), 3.0);
    assert_eq!(spec.eval([0.95, 0.5]), 6.0);
    assert_eq!(spec.eval([1.1, 0.5]), 6.0);
    assert_eq!(spec.eval([1.5, 0.5]), 1.0);
    let reversed = PhantomSpec { shapes: spec.shapes.iter().rev().cloned().collect(), ..spec };
    assert_eq!(reversed.eval([0.95, 0.5]), 3.0);
}

#[test]
fn smooth_edges_pass_through_the_midpoint() {
    let spec = PhantomSpec { transition: 0.03, shapes: vec![disk([1.0, 0.5], 0.2, 5.0)], ..Default::default() };
    assert!((spec.eval([1.2, 0.5]) - 3.0).abs() < 1e-12);
    assert!((spec.eval([1.0, 0.5]) - 5.0).abs() < 1e-4);
    assert!((spec.eval([1.6, 0.5]) - 1.0).abs() < 1e-4);
    let b = Bounds::new(1.0, 5.0).unwrap();
    assert!((0..50).all(|i| b.contains(spec.eval([0.7 + 0.02 * i as f64, 0.5]))));
}

#[test]
fn meshes_differ() {
    let cfg = RunConfig::default();
    let (a, b) = (cfg.data_mesh().unwrap(), cfg.solver_mesh().unwrap());
    assert!(distinct_meshes(&a, &b));
    assert!(!distinct_meshes(&a, &a));
}

#[test]
fn noise_scales_with_the_largest_sample() {
    let cfg = small("", "");
    let synth = synthesize(&cfg).unwrap();
    assert_eq!(corrupt(&synth.clean, 0.0, 1).unwrap().curves, synth.clean.curves);
    let noisy = corrupt(&synth.clean, 0.1, 1).unwrap();
    assert!((noisy.noise_level - 0.1 * synth.clean.max_abs()).abs() < 1e-15);
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, b) in noisy.curves.iter().flatten().zip(synth.clean.curves.iter().flatten()) {
        sum += (a - b).powi(2);
        count += 1;
    }
    let sd = (sum / count as f64).sqrt();
    assert!((sd / noisy.noise_level - 1.0).abs() < 0.05);
}

#[test]
fn uniform_phantom_is_recovered_from_clean_data() {
    let cfg = small("method = \"orthofield\"", "");
    let report = run_pipeline(&cfg, None).unwrap();
    assert_eq!(report.rows.len(), 1);
    let err = report.errors(Method::Orthofield)[0].1;
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn both_methods_report_every_level_in_order() {
    let cfg = small("noise_levels = [0.2, 0.0, 0.02]", DISK);
    let report = run_pipeline(&cfg, None).unwrap();
    let keys: Vec<(f64, Method)> = report.rows.iter().map(|r| (r.noise_level, r.method)).collect();
    assert_eq!(
        keys,
        vec![
            (0.0, Method::Control),
            (0.0, Method::Orthofield),
            (0.02, Method::Control),
            (0.02, Method::Orthofield),
            (0.2, Method::Control),
            (0.2, Method::Orthofield),
        ]
    );
    for m in [Method::Control, Method::Orthofield] {
        let errs = report.errors(m);
        assert_eq!(errs.len(), 3);
        assert!(errs.iter().all(|(_, e)| e.is_finite() && *e >= 0.0));
        assert!(errs.windows(2).all(|w| w[1].1 > w[0].1), "{m:?}: {errs:?}");
    }
}

#[test]
fn failing_level_is_recorded_and_others_continue() {
    let cfg = small("noise_levels = [0.0, 1e3]\nmethod = \"orthofield\"", "");
    let report = run_pipeline(&cfg, None).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows[0].outcome.is_ok());
    let failure = report.rows[1].outcome.as_ref().unwrap_err();
    assert!(failure.validation);
    assert_eq!(report.failures().count(), 1);
    let csv = report.to_csv_string();
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("1000.0,orthofield,,0,failed: "), "{last}");
    assert_eq!(last.split(',').count(), 5);
}

#[test]
fn runs_are_reproducible_and_write_artifacts() {
    let cfg = small("noise_levels = [0.0, 0.05]", DISK);
    let dir = tempfile::tempdir().unwrap();
    let first = run_pipeline(&cfg, Some(dir.path())).unwrap();
    let second = run_pipeline(&cfg, None).unwrap();
    assert_eq!(first.to_csv_string(), second.to_csv_string());
    let written = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(written, first.to_csv_string());
    for name in [
        "timings.csv",
        "phantom_sigma.csv",
        "data_mesh.txt",
        "level0_control_sigma.csv",
        "level1_orthofield_sigma.csv",
        "level1_orthofield_mesh.txt",
        "level1_orthofield_rounds.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let mut other = cfg.clone();
    other.seed += 1;
    let third = run_pipeline(&other, None).unwrap();
    assert_eq!(third.rows[0].outcome, first.rows[0].outcome);
    assert_ne!(third.rows[2].outcome, first.rows[2].outcome);
}
