//! `mesocloud`: solve the dipole system for a void cloud, reproduce the
//! benchmark experiments, and compare against the reference solver.
//!
//! Exit codes: 0 success, 2 configuration/admissibility error, 3 solver
//! failure, 4 oracle failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Admissibility(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Oracle(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Admissibility(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Oracle(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "mesocloud", version, about = "Mesoscale dipole asymptotics for clouds of small spherical voids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dipole system for the configured cloud and export the
    /// solution, diagnostics and optional field samplings.
    Solve { config: PathBuf },
    /// Correction profiles along the reference line for the
    /// volume-preserving cube clouds (ball R = 7, source rho = 2).
    #[command(name = "reproduce-fig5")]
    ReproduceFig5 {
        /// Grid size per axis (N = m^3); repeatable. Default: 2, 5, 10.
        #[arg(short, long)]
        m: Vec<usize>,
    },
    /// The 18-void two-layer benchmark in the ball of radius 120.
    #[command(name = "reproduce-table1")]
    ReproduceTable1,
    /// Solve both the dipole system and the reference solver, then
    /// report their deviation on a bulk plane grid.
    #[command(name = "compare-oracle")]
    CompareOracle { config: PathBuf },
    /// Check a configured cloud for admissibility without solving.
    Validate { config: PathBuf },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads {k}: {e}")))?;
    }
    match &cli.command {
        Command::Solve { config } => commands::cmd_solve(config, &cli.out),
        Command::ReproduceFig5 { m } => {
            let ms: &[usize] = if m.is_empty() { &[2, 5, 10] } else { m };
            commands::cmd_reproduce_fig5(ms, &cli.out)
        }
        Command::ReproduceTable1 => commands::cmd_reproduce_table1(&cli.out),
        Command::CompareOracle { config } => commands::cmd_compare_oracle(config, &cli.out),
        Command::Validate { config } => commands::cmd_validate(config, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
