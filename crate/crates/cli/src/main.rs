//! `regime-extract`: solve, verify and simulate the regime-switching
//! extraction problem from a JSON parameter file.

mod commands;
mod config;
mod error;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BoundaryArgs, ConfigArgs, ScanArgs, SimulateArgs, ValueArgs, VerifyArgs};
use error::{CliError, CliResult};
use manifest::Recorder;

const THREADS_ENV: &str = "REGIME_EXTRACT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "regime-extract", version, about)]
struct Cli {
    /// Write a run manifest here. Subcommands that write files default to
    /// `<first output>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the parameter restrictions; exit 1 when they fail.
    Check(ConfigArgs),
    /// Solve for the optimal boundaries.
    Solve(ConfigArgs),
    /// Write the boundary curves as CSV.
    Boundary(BoundaryArgs),
    /// Value function and HJB residual at one state.
    Value(ValueArgs),
    /// Verify the free-boundary problem and the HJB equation on grids.
    Verify(VerifyArgs),
    /// Monte Carlo estimate of a policy's value.
    Simulate(SimulateArgs),
    /// Feasibility map of the parameter restrictions over volatility pairs.
    ScanRegion(ScanArgs),
}

fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = threads_from_env()?;
    if threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let mut rec = match &cli.command {
        Command::Check(a) => Recorder::new("check", a, threads),
        Command::Solve(a) => Recorder::new("solve", a, threads),
        Command::Boundary(a) => Recorder::new("boundary", a, threads),
        Command::Value(a) => Recorder::new("value", a, threads),
        Command::Verify(a) => Recorder::new("verify", a, threads),
        Command::Simulate(a) => Recorder::new("simulate", a, threads),
        Command::ScanRegion(a) => Recorder::new("scan-region", a, threads),
    };
    let result = match &cli.command {
        Command::Check(a) => commands::check(a, &mut rec),
        Command::Solve(a) => commands::solve(a, &mut rec),
        Command::Boundary(a) => commands::boundary(a, &mut rec),
        Command::Value(a) => commands::value(a, &mut rec),
        Command::Verify(a) => commands::verify(a, &mut rec),
        Command::Simulate(a) => commands::simulate(a, &mut rec),
        Command::ScanRegion(a) => commands::scan_region(a, &mut rec),
    };

    // Outputs already written are documented even if the run failed later.
    let target = cli
        .manifest
        .clone()
        .or_else(|| rec.primary_output().map(manifest::default_manifest_path));
    if let Some(path) = target {
        if cli.manifest.is_some() || rec.has_outputs() {
            rec.finish(&path)?;
        }
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("regime-extract: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
