use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorentz_eit::forward::{read_measurements, write_measurements};
use lorentz_eit::mesh_fem::io::write_mesh_file;
use lorentz_eit::pipeline::{
    corrupt, make_phantom, reconstruct, run_pipeline, synthesize, MethodChoice, RunConfig,
};
use lorentz_eit::recon_control::write_sigma_csv;
use lorentz_eit::{Error, Result};

/// Lorentz-force impedance imaging: phantoms, synthetic measurements and
/// reconstructions.
#[derive(Parser, Debug)]
#[command(name = "lorentz-eit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (`[section]` / `key = value` text).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Noise seed; overrides `seed` in the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// control, orthofield or both.
    #[arg(long, value_name = "METHOD")]
    method: Option<String>,
    /// Fixed noise-to-signal ratio for deconvolution.
    #[arg(long, value_name = "X")]
    snr: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the phantom and the data mesh.
    Phantom(Common),
    /// Write the measurement curves for every configured noise level.
    Synthesize(Common),
    /// Reconstruct from a measurement file.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV (`pulse_id,y1,y2,xi1,xi2,z,value`).
        #[arg(long, value_name = "PATH")]
        measurements: PathBuf,
        /// Relative noise level the file was made with; unknown when absent,
        /// in which case the noise-to-signal ratio is estimated per curve.
        #[arg(long, value_name = "LEVEL")]
        noise: Option<f64>,
    },
    /// Noise sweep over both reconstructions.
    Sweep(Common),
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.method {
            cfg.method = MethodChoice::parse(m)?;
        }
        if let Some(x) = self.snr {
            cfg.deconv.snr = Some(x);
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        let out = cfg
            .output
            .clone()
            .ok_or_else(|| Error::Validation("no output directory (use --out)".into()))?;
        fs::create_dir_all(&out)?;
        Ok((cfg, out))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn phantom(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    let mesh = cfg.data_mesh()?;
    let sigma = make_phantom(&cfg.phantom, cfg.geometry, &mesh)?;
    write_mesh_file(&mesh, &out.join("data_mesh.txt"))?;
    write_sigma_csv(&sigma, create(&out, "phantom_sigma.csv")?)?;
    println!("phantom: {} triangles -> {}", mesh.num_triangles(), out.display());
    Ok(())
}

fn synthesize_cmd(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    let synth = synthesize(&cfg)?;
    write_mesh_file(synth.truth.mesh(), &out.join("data_mesh.txt"))?;
    write_sigma_csv(&synth.truth, create(&out, "phantom_sigma.csv")?)?;
    for (i, &level) in cfg.noise_levels.iter().enumerate() {
        let set = corrupt(&synth.clean, level, cfg.seed)?;
        let name = format!("measurements_level{i}.csv");
        write_measurements(&set, create(&out, &name)?)?;
        println!("{name}: noise {level}, {} curves of {} samples", set.len(), set.grid.n);
    }
    Ok(())
}

fn reconstruct_cmd(common: &Common, measurements: &Path, noise: Option<f64>) -> Result<()> {
    let (mut cfg, out) = common.load()?;
    let file = BufReader::new(File::open(measurements)?);
    let mut set = read_measurements(file, |origin, dir| cfg.pulses.pulse(origin, dir))?;
    match noise {
        Some(level) if level >= 0.0 => set.noise_level = level * set.max_abs(),
        Some(level) => return Err(Error::Validation(format!("noise level must be >= 0 (got {level})"))),
        None => cfg.deconv.always_estimate = true,
    }
    let solver = cfg.solver_mesh()?;
    let truth = make_phantom(&cfg.phantom, cfg.geometry, &cfg.data_mesh()?)?;
    for method in cfg.method.methods() {
        let rec = reconstruct(&cfg, &set, method, &solver, Some(&truth))?;
        let name = method.as_str();
        rec.result.write_sigma_csv(create(&out, &format!("{name}_sigma.csv"))?)?;
        write_mesh_file(rec.result.sigma.mesh(), &out.join(format!("{name}_mesh.txt")))?;
        let mut summary = create(&out, &format!("{name}_summary.json"))?;
        writeln!(summary, "{}", rec.result.summary_json())?;
        if let Some(o) = &rec.ortho {
            o.write_diagnostics_csv(create(&out, &format!("{name}_rounds.csv"))?)?;
        }
        let error = rec.result.sigma.resample_onto(truth.mesh())?.relative_l2_error(&truth)?;
        println!("{name}: {} iterations, relative L2 error against the configured phantom {error:.4}", rec.result.iterations);
    }
    Ok(())
}

fn sweep(common: &Common) -> Result<ExitCode> {
    let (cfg, out) = common.load()?;
    let report = run_pipeline(&cfg, Some(&out))?;
    print!("{}", report.to_csv_string());
    // a failed level is still reported; the exit code tells the caller
    let code = match report.failures().next().map(|row| &row.outcome) {
        None => ExitCode::SUCCESS,
        Some(Err(f)) if f.validation => ExitCode::from(2),
        Some(_) => ExitCode::from(3),
    };
    Ok(code)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Numerical { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Phantom(c) => phantom(c).map(|_| ExitCode::SUCCESS),
        Command::Synthesize(c) => synthesize_cmd(c).map(|_| ExitCode::SUCCESS),
        Command::Reconstruct { common, measurements, noise } => {
            reconstruct_cmd(common, measurements, *noise).map(|_| ExitCode::SUCCESS)
        }
        Command::Sweep(c) => sweep(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
