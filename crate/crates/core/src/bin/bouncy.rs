use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bouncy_core::harness;

/// Bouncy Hamiltonian dynamics samplers and benchmarks.
///
/// Worker threads are taken from BOUNCY_WORKERS (default: all cores).
#[derive(Parser)]
#[command(name = "bouncy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chains described by a JSON config; writes chain_<k>.csv and summary.json.
    Sample { config: PathBuf },
    /// Divergence frequency of refreshed bouncy paths from their coupled BPS paths.
    Converge { config: PathBuf },
    /// Effective sample size of every column of a chain CSV.
    Ess { chain: PathBuf },
    /// HBPS travel-time grid against BPS refresh-rate grid.
    Benchmark { config: PathBuf },
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Sample { config } => harness::run(config),
        Command::Converge { config } => harness::converge(config),
        Command::Ess { chain } => harness::ess(chain),
        Command::Benchmark { config } => harness::benchmark(config),
    };
    ExitCode::from(code as u8)
}
