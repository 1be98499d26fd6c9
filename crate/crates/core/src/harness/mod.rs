//! Command-line plumbing: JSON configs, chain files, summaries and the
//! exit-code conventions of the `bouncy` binary.
//!
//! Exit codes: 0 success, 2 configuration or input error (the message names
//! the offending key), 3 sampler failure (the message names the error kind).

pub mod config;
pub mod io;
mod run;

use std::path::Path;

pub use config::{BenchmarkConfig, ConfigError, ConvergeConfig, RunConfig, SurrogateSpec, TargetSpec};
pub use io::{read_chain_csv, write_chain_csv};
pub use run::{run_benchmark, run_config, run_converge, sample_chain, worker_count, BenchmarkRow, ChainSummary, HarnessError, RunOutcome, WORKERS_ENV};

use crate::convergence::{is_monotone, loglog_slope};
use crate::diagnostics::min_ess_report;
use crate::error::Error;

fn report(e: &HarnessError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// `sample <config>`.
pub fn run(config_path: impl AsRef<Path>) -> i32 {
    let result = RunConfig::load(config_path)
        .map_err(HarnessError::from)
        .and_then(|cfg| run_config(&cfg, worker_count()?));
    match result {
        Ok(out) => {
            for (path, s) in out.chain_paths.iter().zip(&out.summaries) {
                let ess = s.min_ess.map_or("n/a".to_string(), |e| format!("{e:.1}"));
                println!("{}: {} rows, min ESS {ess}", path.display(), s.rows);
            }
            println!("{}", out.summary_path.display());
            0
        }
        Err(e) => report(&e),
    }
}

/// `converge <config>`.
pub fn converge(config_path: impl AsRef<Path>) -> i32 {
    let result = ConvergeConfig::load(config_path)
        .map_err(HarnessError::from)
        .and_then(|cfg| run_converge(&cfg, worker_count()?));
    match result {
        Ok((rows, path)) => {
            println!("delta_t,frequency,std_error,replications");
            for r in &rows {
                println!("{},{},{},{}", r.delta_t, r.frequency, r.std_error, r.replications);
            }
            match loglog_slope(&rows) {
                Some(s) => eprintln!("log-log slope {s:.3}, monotone within 2 SE: {}", is_monotone(&rows, 2.0)),
                None => eprintln!("log-log slope undefined (fewer than two nonzero frequencies)"),
            }
            eprintln!("wrote {}", path.display());
            0
        }
        Err(e) => report(&e),
    }
}

/// `ess <chain.csv>`: per-dimension ESS as JSON on stdout.
pub fn ess(chain_path: impl AsRef<Path>) -> i32 {
    let chain = match read_chain_csv(chain_path) {
        Ok(c) => c,
        Err(e @ (Error::Parse { .. } | Error::EmptyFile | Error::Io(_))) => {
            eprintln!("error: cannot read chain [{}]: {e}", e.kind());
            return 2;
        }
        Err(e) => return report(&HarnessError::Sampler(e)),
    };
    match min_ess_report(&chain, None) {
        Ok(r) => {
            let out = serde_json::json!({
                "rows": chain.len(),
                "dim": chain.dim(),
                "per_dim_ess": r.per_dim,
                "min_ess": r.min_ess,
                "argmin_dim": r.argmin_dim,
            });
            println!("{out}");
            0
        }
        Err(e) => report(&HarnessError::Sampler(e)),
    }
}

/// `benchmark <config>`: relative-ESS table on stdout and in
/// `benchmark.csv`.
pub fn benchmark(config_path: impl AsRef<Path>) -> i32 {
    let result = BenchmarkConfig::load(config_path).map_err(HarnessError::from).and_then(|cfg| run_benchmark(&cfg));
    match result {
        Ok((rows, path)) => {
            println!("{:<8} {:>8} {:>8} {:>10} {:>12} {:>9} {:>13}", "sampler", "T", "refresh", "min_ess", "ess/s", "rel_ess", "rel_ess/s");
            let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v}"));
            for r in &rows {
                println!(
                    "{:<8} {:>8} {:>8} {:>10.1} {:>12.1} {:>9.3} {:>13.3}",
                    r.sampler,
                    opt(r.travel_time),
                    opt(r.refresh_rate),
                    r.min_ess,
                    r.ess_per_second,
                    r.relative_ess,
                    r.relative_ess_per_second
                );
            }
            eprintln!("wrote {}", path.display());
            0
        }
        Err(e) => report(&e),
    }
}
