//! Command-line front end for clustered treatment effect estimation.
//!
//! Every command prints one JSON report to stdout and, under `--out DIR`,
//! writes the same report plus any tabular artifacts as files. Errors go to
//! stderr as a JSON object; bad input exits 2, a failed computation exits 1.

mod commands;
mod config;
mod svg;

use clap::{Parser, Subcommand};

use mlcdr_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mlcdr",
    version,
    about = "Doubly robust treatment effect estimation for clustered data"
)]
struct Cli {
    /// Worker threads for replicated runs; the MLCDR_THREADS environment
    /// variable takes precedence. Defaults to all available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the weighted average treatment effect from a CSV dataset.
    Estimate(commands::EstimateArgs),
    /// Monte Carlo bias, spread, and coverage on the benchmark generator.
    Simulate(commands::SimulateArgs),
    /// Intra-cluster correlation of outcomes and treatments.
    Icc(commands::IccArgs),
    /// Relative-efficiency grid over the random-effect scales.
    Sweep(commands::SweepArgs),
    /// Overlap histograms and weighted-balance t-statistics.
    Diagnose(commands::DiagnoseArgs),
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match std::env::var("MLCDR_THREADS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| {
            Error::Argument(format!("MLCDR_THREADS must be a positive integer, got '{v}'"))
        })?),
        Err(std::env::VarError::NotPresent) => flag,
        Err(std::env::VarError::NotUnicode(_)) => {
            return Err(Error::Argument("MLCDR_THREADS is not valid unicode".into()))
        }
    };
    let Some(t) = threads else { return Ok(()) };
    if t == 0 {
        return Err(Error::Argument("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<String> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Icc(a) => commands::cmd_icc(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::Diagnose(a) => commands::cmd_diagnose(a),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => print!("{report}"),
        Err(e) => {
            let kind = if e.is_input_error() { "input" } else { "computation" };
            eprintln!("{}", serde_json::json!({ "error": e.to_string(), "kind": kind }));
            std::process::exit(if e.is_input_error() { 2 } else { 1 });
        }
    }
}
