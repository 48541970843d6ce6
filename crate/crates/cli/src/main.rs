//! `extsource`: kernels, identity checks, largest-eigenvalue laws and samples
//! for Hermitian ensembles with an external source.

mod commands;
mod config;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{FileConfig, RunArgs, RunConfig};

/// Caps the rayon worker count when set to a positive integer.
pub const THREADS_ENV: &str = "EXTSOURCE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] extsource_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for numerical or I/O failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_config_error() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "extsource", version, about = "Correlation kernels of Hermitian ensembles with an external source")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Recurrence coefficients alpha_k, beta_k, norms h_k and kappa_k for k = 0..n
    Recurrence,
    /// K0(x,y) and K(x,y) on a square grid
    Kernel,
    /// Coefficient identities and projection properties, as a pass/fail table
    Verify {
        /// Also compare against the Gram-matrix kernel on the grid
        #[arg(long)]
        oracle: bool,
    },
    /// P(lambda_max <= s) by a Fredholm determinant
    Lmax,
    /// Sorted spectra of sampled matrices (Gaussian potential only)
    Sample,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Recurrence => "recurrence",
            Command::Kernel => "kernel",
            Command::Verify { .. } => "verify",
            Command::Lmax => "lmax",
            Command::Sample => "sample",
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer (got '{value}')")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    configure_threads()?;
    let file = cli.run.config.as_deref().map(FileConfig::load).transpose()?;
    let oracle = matches!(cli.command, Command::Verify { oracle: true });
    let cfg = RunConfig::resolve(&cli.run, file, oracle)?;
    let outcome = commands::execute(cli.command, &cfg)?;
    output::emit(cli.command, &cfg, &outcome, start)?;
    if outcome.passed == Some(false) {
        return Err(CliError::ChecksFailed("one or more checks failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
