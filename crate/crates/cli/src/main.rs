//! `safesocp`: solve, map, simulate and run the benchmark studies.
//!
//! Exit codes: 0 success, 2 infeasible (with `--strict`), 3 configuration
//! or I/O error, 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Context};

#[derive(Parser)]
#[command(name = "safesocp", version, about = "Safe stabilization with second-order cone constraints")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 2 when the problem is infeasible.
    #[arg(long, global = true)]
    strict: bool,
    /// Compare `solve` against a brute-force grid search.
    #[arg(long, global = true)]
    oracle: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-norm controller at one state, or for given constraints.
    Solve,
    /// Sufficient-condition map over a grid.
    Feasmap,
    /// One closed-loop run.
    Simulate,
    /// Offline dataset-size study or online acquisition study.
    Experiment,
    /// Closed-form controller for a single constraint.
    Universal,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SAFESOCP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("SAFESOCP_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            config::parse(&text)?
        }
        None => config::RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        out: cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        strict: cli.strict,
        oracle: cli.oracle,
        cfg,
    };
    match cli.command {
        Command::Solve => commands::solve(&ctx),
        Command::Feasmap => commands::feasmap(&ctx),
        Command::Simulate => commands::simulate_cmd(&ctx),
        Command::Experiment => commands::experiment(&ctx),
        Command::Universal => commands::universal(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("safesocp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
