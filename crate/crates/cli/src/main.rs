//! `itnav`: simulate sensor logs, fuse them into smoothed trajectories,
//! evaluate tracks against a reference and run synthetic ablations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use itnav_core::io::export::{parse_track, trajectory_csv, write_trajectory};
use itnav_core::io::pipeline::{metrics_csv, SARMSE_SCALES};
use itnav_core::io::{
    compare_methods, ingest, read_track, run_pipeline, simulate_log, write_log, write_outputs,
    LogFormat, Mode, PipelineOptions, RunConfig,
};
use itnav_core::metrics::{default_scales, median, rmse_mae, sarmse_in, AlignmentSpace, DEFAULT_STRIDE_FRACTION};
use itnav_core::{EnuFrame, Error, Shape};

#[derive(Parser)]
#[command(name = "itnav", version, about = "Iterated GNSS/INS path reconstruction")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a sensor log and its ground-truth reference.
    Simulate(SimulateArgs),
    /// Reconstruct the trajectory of a sensor log.
    Fuse(FuseArgs),
    /// Score trajectories against a reference track.
    Evaluate(EvaluateArgs),
    /// Compare EKF, GIEKF and line interpolation over seeded synthetic runs.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct Ablation {
    /// Total passes including the plain EKF pass.
    #[arg(long)]
    iterations: Option<usize>,
    /// Remove fixes over this fraction of the fix span.
    #[arg(long, value_name = "FRAC")]
    gap: Option<f64>,
    /// Keep one fix in N and hold out the rest.
    #[arg(long, value_name = "N")]
    subsample: Option<usize>,
    /// `3d` or `planar-baro`.
    #[arg(long)]
    mode: Option<Mode>,
}

impl Ablation {
    fn options(&self) -> Result<PipelineOptions, Failure> {
        if let Some(g) = self.gap {
            if !(0.0..=1.0).contains(&g) {
                return Err(Failure::usage("--gap must be in [0, 1]"));
            }
        }
        if self.subsample == Some(0) {
            return Err(Failure::usage("--subsample must be at least 1"));
        }
        if self.iterations == Some(0) {
            return Err(Failure::usage("--iterations must be at least 1"));
        }
        Ok(PipelineOptions {
            iterations: self.iterations,
            gap: self.gap,
            subsample: self.subsample,
            mode: self.mode,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides `scenario.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `city_block_loop`, `circle`, `straight` or `figure_eight`.
    #[arg(long)]
    shape: Option<Shape>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Write JSON lines instead of CSV.
    #[arg(long)]
    jsonl: bool,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    common: Common,
    /// Sensor log (`.csv`, or `.jsonl` for JSON lines).
    #[arg(long, short)]
    input: PathBuf,
    /// Reference track CSV to score against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    ablation: Ablation,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference track CSV.
    #[arg(long)]
    reference: PathBuf,
    /// Trajectory CSV; repeat for several.
    #[arg(long = "trajectory", required = true)]
    trajectories: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Align SARMSE windows in the horizontal plane only.
    #[arg(long)]
    planar: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// Seed of the first run; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeded scenarios.
    #[arg(long, default_value_t = 5)]
    runs: u64,
    #[command(flatten)]
    ablation: Ablation,
}

/// Process exit status with a one-line message.
struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { kind: "usage", code: 1, message: message.into() }
    }

    fn divergence(message: impl Into<String>) -> Self {
        Self { kind: "divergence", code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match &e {
            Error::Config(_) => ("config", 1),
            Error::Io(_) => ("io", 2),
            _ => ("data", 2),
        };
        let message = match e {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        Self { kind, code, message }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io(e)))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        Failure::from(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.scenario.rng_seed = s;
    }
    if let Some(s) = args.shape {
        cfg.scenario.shape = s;
    }
    if let Some(d) = args.duration {
        cfg.scenario.duration = d;
    }
    cfg.scenario.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let (log, reference) = simulate_log(&cfg.scenario)?;
    let dir = &args.common.output;
    create_dir(dir)?;
    let (name, format) = if args.jsonl {
        ("sensor_log.jsonl", LogFormat::JsonLines)
    } else {
        ("sensor_log.csv", LogFormat::Csv)
    };
    write_log(&log, &dir.join(name), format)?;
    write_trajectory(&dir.join("reference.csv"), &reference.trajectory, reference.origin.as_ref())?;
    write(&dir.join("config.toml"), &cfg.to_toml()?)?;
    println!(
        "{}: {} IMU rows, {} fixes, {} barometer rows",
        dir.join(name).display(),
        log.imu.len(),
        log.locations.len(),
        log.barometer.len()
    );
    Ok(())
}

fn fuse(args: &FuseArgs) -> Result<(), Failure> {
    let cfg = load_config(args.common.config.as_deref())?;
    let opts = args.ablation.options()?;
    let ing = ingest(&args.input, LogFormat::from_path(&args.input))?;
    if ing.dropped() > 0 {
        warn!(
            "{} rows dropped ({} malformed or out of order, {} duplicates)",
            ing.dropped(),
            ing.diagnostics.len(),
            ing.duplicates
        );
    }
    let reference = args.reference.as_deref().map(read_track).transpose()?;
    let report = run_pipeline(&ing.log, &cfg, &opts, reference.as_ref())?;
    write_outputs(&report, &ing.log, &args.common.output)?;
    for r in &report.iterations {
        println!(
            "{:<10} rmse {} sarmse_largest {} heldout_rmse {} nlpd {}",
            r.label,
            opt(r.rmse),
            opt(r.sarmse_largest()),
            opt(r.heldout_rmse),
            opt(r.nlpd)
        );
    }
    if report.diverged {
        return Err(Failure::divergence(format!(
            "pass {} diverged; outputs hold the last good pass",
            report.iterations.len()
        )));
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let reference = read_track(&args.reference)?;
    let mut metrics = String::from("trajectory,rmse,mae,sarmse_largest\n");
    let mut curves = String::from("trajectory,scale_seconds,error_meters,n_segments\n");
    for path in &args.trajectories {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::from(Error::InvalidInput(format!("{}: {e}", path.display()))))?;
        let track = parse_track(&text)?;
        let gt = match track.origin {
            Some(o) => reference.in_frame(&EnuFrame::new(o)?)?,
            None => reference.trajectory.clone(),
        };
        let tr = &track.trajectory;
        let (rmse, mae) = rmse_mae(&gt, tr)?;
        let span = gt.end().min(tr.end()) - gt.start().max(tr.start());
        let space = if args.planar { AlignmentSpace::Planar } else { AlignmentSpace::Spatial };
        let curve = sarmse_in(&gt, tr, &default_scales(span, SARMSE_SCALES), DEFAULT_STRIDE_FRACTION, space)?;
        let name = path.display();
        let largest = curve.largest_scale_error();
        let _ = writeln!(metrics, "{name},{rmse},{mae},{}", largest.map_or_else(String::new, |x| x.to_string()));
        for ((s, e), n) in curve.scales.iter().zip(&curve.errors).zip(&curve.segments) {
            let _ = writeln!(curves, "{name},{s},{e},{n}");
        }
        println!("{name}: rmse {rmse:.4} mae {mae:.4} sarmse_largest {}", opt(largest));
    }
    if let Some(dir) = &args.output {
        create_dir(dir)?;
        write(&dir.join("metrics.csv"), &metrics)?;
        write(&dir.join("sarmse.csv"), &curves)?;
    }
    Ok(())
}

fn ablate(args: &AblateArgs) -> Result<(), Failure> {
    let cfg = load_config(args.common.config.as_deref())?;
    let opts = args.ablation.options()?;
    if args.runs == 0 {
        return Err(Failure::usage("--runs must be at least 1"));
    }
    let dir = &args.common.output;
    create_dir(dir)?;
    let mut rows = String::from("run,seed,method,rmse,mae,sarmse_largest,heldout_median\n");
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    let mut diverged = 0;
    for run in 0..args.runs {
        let mut spec = cfg.scenario.clone();
        spec.rng_seed = args.seed.wrapping_add(run);
        info!("run {run} with seed {}", spec.rng_seed);
        let (report, scores) = compare_methods(&spec, &cfg, &opts)?;
        diverged += usize::from(report.diverged);
        if run == 0 {
            write(&dir.join("metrics_run0.csv"), &metrics_csv(&report))?;
            write(&dir.join("trajectory_run0.csv"), &trajectory_csv(report.last_trajectory(), Some(&report.origin)))?;
        }
        for (i, s) in scores.iter().enumerate() {
            let _ = writeln!(
                rows,
                "{run},{},{},{},{},{},{}",
                spec.rng_seed,
                s.method,
                s.rmse,
                s.mae,
                s.sarmse_largest.map_or_else(String::new, |x| x.to_string()),
                s.heldout_median.map_or_else(String::new, |x| x.to_string()),
            );
            // First pass, last pass and the baseline, in that order.
            let key = match (i, scores.len()) {
                (0, _) => "EKF".to_string(),
                (i, n) if i + 1 == n => s.method.clone(),
                _ => "GIEKF".to_string(),
            };
            match by_method.iter_mut().find(|(m, _)| *m == key) {
                Some((_, v)) => v.push(s.rmse),
                None => by_method.push((key, vec![s.rmse])),
            }
        }
    }
    write(&dir.join("ablation.csv"), &rows)?;
    let mut summary = String::from("method,runs,median_rmse\n");
    for (m, v) in &by_method {
        let med = median(v).unwrap_or(f64::NAN);
        let _ = writeln!(summary, "{m},{},{med}", v.len());
        println!("{m:<6} median rmse {med:.4} over {} runs", v.len());
    }
    write(&dir.join("summary.csv"), &summary)?;
    if diverged > 0 {
        return Err(Failure::divergence(format!("{diverged} of {} runs diverged", args.runs)));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fuse(a) => fuse(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.kind().to_string();
            let detail = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("itnav: error[usage]: {}", if detail.is_empty() { msg } else { detail });
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .format_target(false)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("itnav: error[{}]: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
