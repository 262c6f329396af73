//! `hetrisk`: build factor risk models, optimize portfolios and run the
//! intraday mean-reversion backtest from the command line.
//!
//! Exit status is 0 on success, 2 for unreadable or malformed inputs and
//! invalid settings, and 1 for numerical failures or failed invariant
//! checks.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hetrisk",
    version,
    about = "Factor risk models, Sharpe optimizers and an intraday backtest"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HETRISK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic price panel and industry hierarchy.
    Synth(commands::synth::SynthArgs),
    /// Build a PC or heterotic risk model from a price panel.
    Build(commands::build::BuildArgs),
    /// Compute Sharpe-optimal weights for an alpha under a model.
    Optimize(commands::optimize::OptimizeArgs),
    /// Run the five-variant backtest and audit its holdings.
    Backtest(commands::backtest::BacktestArgs),
    /// Check the structural invariants of a model file.
    Verify(commands::verify::VerifyArgs),
}

#[derive(Debug)]
pub enum CliError {
    Core(hetrisk::Error),
    /// Outputs were written but run-level checks failed.
    Checks(Vec<String>),
}

impl From<hetrisk::Error> for CliError {
    fn from(e: hetrisk::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(
                hetrisk::Error::InvalidConfig("--threads must be at least 1".into()).into(),
            );
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| hetrisk::Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Build(a) => commands::build::run(a),
        Command::Optimize(a) => commands::optimize::run(a),
        Command::Backtest(a) => commands::backtest::run(a),
        Command::Verify(a) => commands::verify::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
        Err(CliError::Checks(failures)) => {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(1)
        }
    }
}
