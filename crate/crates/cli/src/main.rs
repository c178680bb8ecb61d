//! `transiogram`: scan, fit, validate, measure and simulate categorical
//! rasters from the command line.
//!
//! Exit status is 0 on success, 2 for usage or input errors and 3 when a
//! computation is numerically infeasible.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::{FitArgs, ScanArgs, ShapeArgs, SimulateArgs, Sink, ValidateArgs};
use manifest::RunManifest;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "transiogram", version, about = "Transiogram toolkit for categorical rasters")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted. The run manifest is written next to
    /// it as `<output>.manifest.json` (stderr when writing to stdout).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads, 0 = all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
enum Command {
    /// Empirical transiograms by exhaustive scanning.
    Scan(ScanArgs),
    /// Kernel-regression fit of an empirical curve CSV.
    Fit(FitArgs),
    /// Audit a parametric model for use as an indicator-based transiogram.
    Validate(ValidateArgs),
    /// Transition rates and perimeter-to-area ratio of one class.
    Shape(ShapeArgs),
    /// Truncated Gaussian random field.
    Simulate(SimulateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scan(_) => "scan",
            Command::Fit(_) => "fit",
            Command::Validate(_) => "validate",
            Command::Shape(_) => "shape",
            Command::Simulate(_) => "simulate",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    let threads = rayon::current_num_threads();
    let params = serde_json::to_value(&cli.command)?;
    let m = RunManifest::new(cli.command.name(), params, cli.seed, threads);
    let sink = Sink { output: cli.output };
    match &cli.command {
        Command::Scan(a) => commands::scan(a, &sink, m),
        Command::Fit(a) => commands::fit(a, &sink, m),
        Command::Validate(a) => commands::validate(a, &sink, m),
        Command::Shape(a) => commands::shape(a, &sink, m),
        Command::Simulate(a) => commands::simulate(a, &sink, m),
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<transiogram::Error>() {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn numerical_errors_map_to_three() {
        let e = anyhow::Error::new(transiogram::Error::EmbeddingNotPsd {
            min_eigenvalue: -1.0,
        });
        assert_eq!(exit_status(&e), EXIT_NUMERICAL);
        let e = anyhow::Error::new(transiogram::Error::AbsentClass(2)).context("shape");
        assert_eq!(exit_status(&e), EXIT_INPUT);
    }
}
