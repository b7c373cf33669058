use std::path::PathBuf;
use std::process::ExitCode;

use bkt::config::{ExperimentConfig, Overrides};
use bkt::{pipeline, report, AppError};
use clap::{Parser, Subcommand};

/// Multiple-model Bayesian tracking experiments.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; realization r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Simulate ground truth and measurements.
    Simulate,
    /// Run the estimators, simulating first where data is missing.
    Track,
    /// Aggregate estimates into report.json and report.csv.
    Report,
    /// Simulate, track and report.
    All,
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        realizations: cli.realizations,
        workers: cli.workers,
        output: cli.output.clone(),
    })?;
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg),
        Command::Track => pipeline::cmd_track(&cfg),
        Command::Report => report::cmd_report(&cfg).map(|_| ()),
        Command::All => {
            pipeline::cmd_simulate(&cfg)?;
            pipeline::cmd_track(&cfg)?;
            report::cmd_report(&cfg).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bkt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
