use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{add_noise, measure_all, MeasureOptions, MeasurementSet, ZGrid};
use crate::mesh_fem::io::write_mesh_file;
use crate::mesh_fem::{ConductivityMap, TriMesh, VectorField};
use crate::recon_control::{initial_guess, minimize, write_sigma_csv, ReconResult};
use crate::recon_orthofield::{adaptive_reconstruct_resampled, OrthoResult};
use crate::virtual_current::{beam_fan, current_from_profiles, deconvolve_set};

use super::config::{Method, RunConfig};
use super::phantom::make_phantom;

/// Phantom on the data mesh and its clean measurements.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub truth: ConductivityMap,
    pub clean: MeasurementSet,
}

pub fn synthesize(cfg: &RunConfig) -> Result<Synthesis> {
    let mesh = cfg.data_mesh()?;
    let truth = make_phantom(&cfg.phantom, cfg.geometry, &mesh)?;
    let plan = &cfg.pulses;
    let mut pulses = Vec::new();
    for dir in &plan.directions {
        let template = plan.pulse([0.0, 0.0], *dir)?;
        pulses.extend(beam_fan(&mesh, *dir, &template, plan.spacing(), plan.phase)?);
    }
    let grid = ZGrid::covering(&pulses, &mesh, plan.dz)?;
    let opts = MeasureOptions { radial_points: plan.radial_points };
    let clean = measure_all(&truth, &pulses, grid, opts)?;
    Ok(Synthesis { truth, clean })
}

/// Adds noise with standard deviation `level · max|M|`.
pub fn corrupt(clean: &MeasurementSet, level: f64, seed: u64) -> Result<MeasurementSet> {
    add_noise(clean, level * clean.max_abs(), seed)
}

/// Output of one reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub result: ReconResult,
    /// Current estimated on the solver mesh.
    pub current: VectorField,
    pub ortho: Option<OrthoResult>,
}

/// Deconvolution, current estimation on `solver` and inversion by `method`.
/// `truth` only feeds the per-round diagnostics.
pub fn reconstruct(
    cfg: &RunConfig,
    set: &MeasurementSet,
    method: Method,
    solver: &Arc<TriMesh>,
    truth: Option<&ConductivityMap>,
) -> Result<Reconstruction> {
    let plan = &cfg.pulses;
    let profiles = deconvolve_set(set, cfg.deconv.settings())?;
    let estimate = |mesh: &Arc<TriMesh>| {
        current_from_profiles(mesh, plan.site, &set.pulses, &profiles, set.grid, plan.cond_cap).map(|r| r.0)
    };
    let current = estimate(solver)?;
    match method {
        Method::Control => {
            let sigma0 = initial_guess(solver, cfg.bounds()?)?;
            let result = minimize(&sigma0, &current, &cfg.control)?;
            Ok(Reconstruction { result, current, ortho: None })
        }
        Method::Orthofield => {
            let ortho = adaptive_reconstruct_resampled(&current, &cfg.orthofield, truth, Some(&estimate))?;
            Ok(Reconstruction { result: ortho.to_recon_result(), current, ortho: Some(ortho) })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowFailure {
    /// Bad input rather than a failed computation.
    pub validation: bool,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub noise_level: f64,
    pub method: Method,
    /// Relative L² error on the data mesh.
    pub outcome: std::result::Result<f64, RowFailure>,
    pub iterations: usize,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseSweepReport {
    /// Sorted by noise level, then method.
    pub rows: Vec<SweepRow>,
}

impl NoiseSweepReport {
    /// `noise_level,method,relative_l2_error,iterations,status`. Timings
    /// are left out so equal runs give equal bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "noise_level,method,relative_l2_error,iterations,status")?;
        for r in &self.rows {
            let (err, status) = match &r.outcome {
                Ok(e) => (format!("{e:?}"), "ok".to_string()),
                Err(f) => (String::new(), format!("failed: {}", f.message.replace([',', '\n'], ";"))),
            };
            writeln!(w, "{:?},{},{err},{},{status}", r.noise_level, r.method.as_str(), r.iterations)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// `noise_level,method,wall_time_s`.
    pub fn write_timings_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "noise_level,method,wall_time_s")?;
        for r in &self.rows {
            writeln!(w, "{:?},{},{:.3}", r.noise_level, r.method.as_str(), r.wall_time.as_secs_f64())?;
        }
        Ok(())
    }

    /// `(noise level, error)` of successful rows for `method`.
    pub fn errors(&self, method: Method) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.outcome.as_ref().ok().map(|e| (r.noise_level, *e)))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }
}

/// True when the two meshes do not share their node set.
pub fn distinct_meshes(a: &TriMesh, b: &TriMesh) -> bool {
    a.nodes() != b.nodes()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

struct Job {
    level_index: usize,
    level: f64,
    method: Method,
}

fn run_job(
    cfg: &RunConfig,
    synth: &Synthesis,
    solver: &Arc<TriMesh>,
    job: &Job,
    out: Option<&Path>,
) -> Result<(f64, usize)> {
    let set = corrupt(&synth.clean, job.level, cfg.seed)?;
    let rec = reconstruct(cfg, &set, job.method, solver, Some(&synth.truth))?;
    let error = rec.result.sigma.resample_onto(synth.truth.mesh())?.relative_l2_error(&synth.truth)?;
    if !error.is_finite() {
        return Err(Error::numerical("reconstruction error is not finite", error));
    }
    if let Some(dir) = out {
        let stem = format!("level{}_{}", job.level_index, job.method.as_str());
        rec.result.write_sigma_csv(create(dir, &format!("{stem}_sigma.csv"))?)?;
        write_mesh_file(rec.result.sigma.mesh(), &dir.join(format!("{stem}_mesh.txt")))?;
        if let Some(o) = &rec.ortho {
            o.write_diagnostics_csv(create(dir, &format!("{stem}_rounds.csv"))?)?;
        }
    }
    Ok((error, rec.result.iterations))
}

/// Synthesizes the phantom's data once, then for every noise level and
/// method corrupts, reconstructs and measures the error on the data mesh.
/// A failure at one level is recorded in its row; the other levels still
/// run. When `out` is given the report, timings, phantom and per-job maps
/// are written there.
pub fn run_pipeline(cfg: &RunConfig, out: Option<&Path>) -> Result<NoiseSweepReport> {
    cfg.validate()?;
    let synth = synthesize(cfg)?;
    let solver = cfg.solver_mesh()?;
    if !distinct_meshes(&solver, synth.truth.mesh()) {
        return Err(Error::validation("solver and data meshes coincide"));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_sigma_csv(&synth.truth, create(dir, "phantom_sigma.csv")?)?;
        write_mesh_file(synth.truth.mesh(), &dir.join("data_mesh.txt"))?;
    }
    let mut levels: Vec<f64> = cfg.noise_levels.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let jobs: Vec<Job> = levels
        .iter()
        .enumerate()
        .flat_map(|(i, &level)| {
            cfg.method.methods().into_iter().map(move |method| Job { level_index: i, level, method })
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let res = run_job(cfg, &synth, &solver, job, out);
            let wall_time = start.elapsed();
            let (outcome, iterations) = match res {
                Ok((e, it)) => (Ok(e), it),
                Err(e) => {
                    log::warn!("noise {} / {}: {e}", job.level, job.method.as_str());
                    (Err(RowFailure { validation: e.is_validation(), message: e.to_string() }), 0)
                }
            };
            SweepRow { noise_level: job.level, method: job.method, outcome, iterations, wall_time }
        })
        .collect::<Vec<_>>();
    let report = NoiseSweepReport { rows };
    if let Some(dir) = out {
        report.write_csv(create(dir, "report.csv")?)?;
        report.write_timings_csv(create(dir, "timings.csv")?)?;
    }
    Ok(report)
}
