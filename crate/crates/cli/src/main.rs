use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randcache::experiment::{self, CheckStatus, ExperimentKind, ExperimentSpec, Report};
use randcache::Error;

/// Randomized caching experiments for cache-enabled small-cell networks.
#[derive(Parser)]
#[command(name = "randcache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the closed-form offloading loss with Monte Carlo estimates.
    ValidateTheorem1(Common),
    /// Sweep the waiting time and track the excess loss of the fitted strategy.
    WaitingTime(Common),
    /// Compare transfer-learning and target-only popularity estimates.
    TlCompare(Common),
    /// Compute the loss-minimizing caching strategy.
    Optimize(Common),
    /// Evaluate the waiting-time bounds over a parameter grid.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and rows.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::ValidateTheorem1(c) => (ExperimentKind::ValidateTheorem1, c),
            Command::WaitingTime(c) => (ExperimentKind::WaitingTimeSweep, c),
            Command::TlCompare(c) => (ExperimentKind::TlComparison, c),
            Command::Optimize(c) => (ExperimentKind::Optimize, c),
            Command::Bounds(c) => (ExperimentKind::Bounds, c),
        }
    }
}

fn load_spec(kind: ExperimentKind, args: &Common) -> Result<ExperimentSpec, Error> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            ExperimentSpec::from_json_str(kind, &text)?
        }
        None => ExperimentSpec::default_for(kind),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(workers) = args.workers {
        spec.workers = Some(workers);
    }
    if let Some(out) = &args.out {
        spec.output_dir = Some(out.display().to_string());
    }
    spec.validate()?;
    Ok(spec)
}

fn print_summary(report: &Report, out: &std::path::Path) {
    for check in &report.summary.checks {
        let tag = match check.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        println!("{tag} {}: {}", check.name, check.detail);
    }
    println!("{} rows written to {}", report.row_count, out.display());
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let spec = match load_spec(kind, &args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = PathBuf::from(spec.output_dir.clone().unwrap_or_else(|| "out".into()));
    let report = match experiment::run(&spec) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report.write_to(&out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    print_summary(&report, &out);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
