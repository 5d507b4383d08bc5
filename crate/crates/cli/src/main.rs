//! `bcv`: verify the TTC barrier certificate with an SMT solver, scan
//! trajectory recordings for conflicts, and evaluate speed adjustment.

mod config;
mod data;
mod error;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use bcv_core::conflict::AdjustMode;
use bcv_core::smt::QueryMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Format, RunConfig, StrategyKind};
use error::{exit, CliError};
use output::Artifacts;

#[derive(Parser, Debug)]
#[command(
    name = "bcv",
    version,
    about = "TTC barrier certificate verification and conflict analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Artifact formats (overrides `output.formats`).
    #[arg(long, value_enum, value_delimiter = ',', global = true)]
    format: Vec<Format>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Open,
    Closed,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit the safety query and check it with the solver and the grid oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "closed")]
        mode: ModeArg,
        /// Number of vehicles in the platoon.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Only write query.smt2.
        #[arg(long)]
        emit_only: bool,
    },
    /// Classify every follower/leader pair and list conflict events.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Frame window: `all`, a frame count, or `start..end`.
        #[arg(long)]
        window: Option<String>,
        /// Trajectory CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Reduce conflicting followers' speeds and compare before and after.
    Adjust {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        window: Option<String>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyKind>,
        /// Carry adjusted speeds forward through each follower's trajectory.
        #[arg(long)]
        propagated: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify {
            common,
            mode,
            n,
            emit_only,
        } => {
            let (config, artifacts) = prepare(RunConfig::load(common.config.as_deref())?, &common, None)?;
            let mode = match mode {
                ModeArg::Open => QueryMode::Open,
                ModeArg::Closed => QueryMode::Closed,
            };
            verify::run(&config, &artifacts, &verify::VerifyArgs { mode, n, emit_only })
        }
        Command::Scan { common, window, inputs } => {
            let (config, artifacts) = prepare(RunConfig::load(common.config.as_deref())?, &common, window)?;
            data::scan(&config, &artifacts, &inputs)
        }
        Command::Adjust {
            common,
            window,
            strategy,
            propagated,
            inputs,
        } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            if let Some(kind) = strategy {
                config.strategy.kind = kind;
            }
            if propagated {
                config.mode = AdjustMode::Propagated;
            }
            let (config, artifacts) = prepare(config, &common, window)?;
            data::adjust(&config, &artifacts, &inputs)
        }
    }
}

/// Applies command-line overrides, validates, and opens the output directory.
fn prepare(mut config: RunConfig, common: &Common, window: Option<String>) -> Result<(RunConfig, Artifacts), CliError> {
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if !common.format.is_empty() {
        config.output.formats = common.format.clone();
    }
    if window.is_some() {
        config.window = window;
    }
    config.validate()?;
    let artifacts = Artifacts::create(&config.output.dir, config.digest())?;
    Ok((config, artifacts))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("bcv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
