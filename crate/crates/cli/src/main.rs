use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wipsim::harness::{run_experiment, ExperimentConfig, ExperimentKind, Resolved, RunOptions, Status};
use wipsim::Error;

/// Set to abort a run after this many work chunks, leaving its checkpoint.
const STOP_ENV: &str = "WIPSIM_STOP_AFTER_CHUNKS";

#[derive(Parser)]
#[command(name = "wipsim", version, about = "Simulate and check nonstandard limit laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: the config's `output`, else `out/<config stem>/<experiment>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a tolerance, e.g. `--tolerance ks=0.05`. Repeatable.
    #[arg(long = "tolerance", global = true, value_name = "NAME=VALUE")]
    tolerances: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Estimate the invariant mean of an observable.
    Calibrate,
    /// Distributional limit of the normalised sums.
    Clt,
    /// Functional limit of the path process.
    Wip,
    /// Return-time tails and the induced decomposition.
    Tails,
    /// Martingale approximation on the Gibbs-Markov model.
    GmMartingale,
    /// Stadium geometry and Liouville invariance.
    StadiumGeom,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Calibrate => ExperimentKind::Calibrate,
            Command::Clt => ExperimentKind::Clt,
            Command::Wip => ExperimentKind::Wip,
            Command::Tails => ExperimentKind::Tails,
            Command::GmMartingale => ExperimentKind::GmMartingale,
            Command::StadiumGeom => ExperimentKind::StadiumGeom,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::MissingCalibration(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let kind = cli.command.kind();
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_file(&path)?;
    for t in &cli.tolerances {
        cfg.tolerances.set(t)?;
    }
    let res = Resolved::new(&cfg, kind, cli.seed)?;
    let stop_after_chunks = match std::env::var(STOP_ENV) {
        Ok(v) => Some(v.parse().map_err(|_| Error::Config(format!("{STOP_ENV} must be an integer")))?),
        Err(_) => None,
    };
    let out = cli.out.or_else(|| cfg.experiment.output.clone()).unwrap_or_else(|| {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        PathBuf::from("out").join(stem).join(kind.name())
    });
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let outcome = pool.install(|| run_experiment(&res, &RunOptions { out: out.clone(), stop_after_chunks }))?;

    for c in &outcome.report.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
        println!("{tag} {} = {}{note}", c.name, c.value);
    }
    println!("report: {}", out.join("report.json").display());
    Ok(outcome.report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
