//! `hjb`: dataset generation, training, evaluation, rollouts and the SDRE
//! discrepancy study, driven by a JSON config.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 I/O error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use hjb_core::training::TrainMode;

use crate::commands::Context;
use crate::config::RunConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hjb", version, about = "Neural HJB value functions warm-started from SDRE data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training pipeline.
    #[arg(long, global = true, value_enum, default_value_t = Mode::TwoStep)]
    mode: Mode,
    /// Checkpoint JSON, or `sdre` for the SDRE controller in `rollout`.
    #[arg(long, global = true)]
    checkpoint: Option<String>,
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace every seed in the config with this value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sample the SDRE gradient dataset.
    Generate,
    /// Train a network on the generated dataset and/or the HJB residual.
    Train,
    /// Grid metrics of a checkpoint; multi-seed medians when `n_runs > 1`.
    Eval,
    /// Closed-loop trajectories under a checkpoint's feedback or SDRE.
    Rollout,
    /// HJB residual of the SDRE value function across the epsilon ladder.
    Discrepancy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    DataOnly,
    ResidualOnly,
    TwoStep,
    Combined,
}

impl From<Mode> for TrainMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::DataOnly => TrainMode::DataOnly,
            Mode::ResidualOnly => TrainMode::ResidualOnly,
            Mode::TwoStep => TrainMode::TwoStep,
            Mode::Combined => TrainMode::Combined,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let bytes = std::fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    let mut config = RunConfigFile::parse(text)?;
    if let Some(k) = cli.seed_override {
        config.override_seeds(k);
    }
    let out = cli
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory (set 'output' or pass --out)".into()))?;
    let ctx = Context {
        config,
        config_sha256: hex::encode(Sha256::digest(&bytes)),
        seed_override: cli.seed_override,
        out,
    };
    let checkpoint = cli.checkpoint.as_deref();
    match cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Train => commands::train(&ctx, cli.mode.into()),
        Command::Eval => commands::eval(&ctx, cli.mode.into(), checkpoint),
        Command::Rollout => commands::rollout(&ctx, checkpoint),
        Command::Discrepancy => commands::discrepancy(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
