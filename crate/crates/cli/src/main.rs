//! `msl`: simulate, estimate, filter, backtest and summarize the
//! panic-regime factor stochastic volatility model.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msl_core::Error;

#[derive(Parser, Debug)]
#[command(name = "msl", version, about = "Panic-regime factor stochastic volatility toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate returns and the latent path from a parameter file.
    Simulate(RunArgs),
    /// Run the PMMH sampler on the training returns and write the chain.
    Estimate(RunArgs),
    /// Run one particle filter over the returns and write per-step traces.
    Filter(RunArgs),
    /// Out-of-sample minimum-variance portfolio and VaR backtest.
    Backtest(RunArgs),
    /// Posterior summary table of a chain file.
    Summarize(RunArgs),
}

/// 1: configuration, 2: data, 3: numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Data { .. } | Error::Io { .. } | Error::Csv(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = commands::configure_workers() {
        eprintln!("msl: error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let (name, result) = match cli.command {
        Command::Simulate(a) => ("simulate", commands::simulate(&a)),
        Command::Estimate(a) => ("estimate", commands::estimate(&a)),
        Command::Filter(a) => ("filter", commands::filter(&a)),
        Command::Backtest(a) => ("backtest", commands::backtest(&a)),
        Command::Summarize(a) => ("summarize", commands::summarize(&a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msl {name}: error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
