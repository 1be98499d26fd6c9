use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{BaseStep, BenchmarkConfig, ConfigError, ConvergeConfig, FactorSpec, RunConfig, SamplerSpec, TargetKind};
use super::io::write_chain_csv;
use crate::bps::{Bps, BpsConfig};
use crate::chain::{Chain, EventCounts};
use crate::convergence::{divergence_curve, CouplingOptions, CurveRow};
use crate::diagnostics::{min_ess_report, EssReport};
use crate::dynamics::{BounceMethod, BouncyDynamics, BouncySampler};
use crate::error::{Error, Result};
use crate::hbps::Hbps;
use crate::integrator::{InnerFlow, SplitConfig, SplitSampler};
use crate::local::{block_factors, coordinate_factors, gaussian_block_factors, gaussian_coordinate_factors, FactorSet, LocalSampler};
use crate::nuts::{auto_base_step, NutsConfig, NutsSampler};
use crate::rng::{chain_rng, mix};
use crate::roots::SolverConfig;
use crate::surrogates::SurrogateFlow;
use crate::targets::{check_feasible, GaussianTarget, Target};

pub const WORKERS_ENV: &str = "BOUNCY_WORKERS";
const PILOT_KEY: u64 = 0x7069_6c6f_74;

/// Failure of a harness command, split the way the exit codes are.
#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    Config(ConfigError),
    Sampler(Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Sampler(_) => 3,
        }
    }
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Config(e) => write!(f, "configuration error: {e}"),
            HarnessError::Sampler(e) => write!(f, "sampler failure [{}]: {e}", e.kind()),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        HarnessError::Sampler(e)
    }
}

type HResult<T> = std::result::Result<T, HarnessError>;

/// Worker count from `BOUNCY_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> HResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ConfigError::new(WORKERS_ENV, format!("expected a positive integer, got `{s}`")).into()),
        },
    }
}

fn pool(workers: usize) -> HResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Sampler(Error::Io(e.to_string())))
}

/// Unconstrained Gaussian targets get closed-form per-block depletion in
/// the local sampler.
fn plain_gaussian(cfg: &RunConfig) -> Option<GaussianTarget> {
    match &cfg.target.kind {
        TargetKind::Gaussian(g) if cfg.target.constraints.is_empty() => g.build().ok(),
        _ => None,
    }
}

/// One chain of the configured sampler, plus per-iteration NUTS depths.
pub fn sample_chain<R: Rng + ?Sized>(
    sampler: &SamplerSpec,
    target: &dyn Target,
    gaussian: Option<&GaussianTarget>,
    flow: &dyn SurrogateFlow,
    solver: &SolverConfig,
    base_step: Option<f64>,
    iterations: usize,
    x0: &[f64],
    rng: &mut R,
) -> Result<(Chain, Option<Vec<usize>>)> {
    let chain = match sampler {
        SamplerSpec::Hbps { travel_time } => {
            if flow.is_linear() {
                let mut h = Hbps::new(target, *travel_time);
                h.solver = solver.clone();
                h.sample_with_rng(iterations, x0, rng)?
            } else {
                solver.validate()?;
                let dynamics = BouncyDynamics::new(flow, target).with_solver(solver).with_method(BounceMethod::Exact);
                BouncySampler::new(dynamics, *travel_time).sample_with_rng(iterations, x0, rng)?
            }
        }
        SamplerSpec::Nuts { max_depth, uturn_tol, .. } => {
            let config = NutsConfig {
                base_step: base_step.ok_or_else(|| Error::InvalidInput("base step not resolved".into()))?,
                max_depth: *max_depth,
                uturn_tol: *uturn_tol,
                solver: solver.clone(),
            };
            let (chain, depths) = NutsSampler::new(target, config).sample_with_rng(iterations, x0, rng)?;
            return Ok((chain, Some(depths)));
        }
        SamplerSpec::Split {
            step,
            steps_per_proposal,
            leapfrog_substeps,
        } => {
            let config = SplitConfig {
                step: *step,
                steps_per_proposal: *steps_per_proposal,
                inner_flow: leapfrog_substeps.map_or(InnerFlow::Exact, |substeps| InnerFlow::Leapfrog { substeps }),
            };
            SplitSampler::new(flow, target, config).sample_with_rng(iterations, x0, rng)?
        }
        SamplerSpec::Local { travel_time, factors } => {
            if !target.constraints().is_empty() {
                return Err(Error::Unsupported("local dynamics do not handle constraints".into()));
            }
            let set: FactorSet = match (factors, gaussian) {
                (FactorSpec::Coordinate, Some(g)) if target.dim() > 1 => gaussian_coordinate_factors(g)?,
                (FactorSpec::Coordinate, _) => coordinate_factors(target)?,
                (FactorSpec::Blocks(b), Some(g)) => gaussian_block_factors(g, b.clone())?,
                (FactorSpec::Blocks(b), None) => block_factors(target, b.clone())?,
            };
            let mut s = LocalSampler::new(flow, set, *travel_time);
            s.solver = solver.clone();
            s.sample_with_rng(iterations, x0, rng)?
        }
        SamplerSpec::Bps {
            refresh_rate,
            total_time,
            thinning,
        } => {
            let config = BpsConfig {
                refresh_rate: *refresh_rate,
                total_time: *total_time,
                solver: solver.clone(),
                thinning: *thinning,
            };
            Bps::new(target, config).sample_with_rng(iterations, x0, rng)?
        }
    };
    Ok((chain, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub index: usize,
    pub file: String,
    pub rows: usize,
    pub wall_seconds: f64,
    pub min_ess: Option<f64>,
    pub argmin_dim: Option<usize>,
    pub ess_per_second: Option<f64>,
    pub per_dim_ess: Option<Vec<f64>>,
    /// Why ESS is missing (too few rows, constant column).
    pub ess_error: Option<String>,
    pub acceptance_rate: Option<f64>,
    pub event_counts: EventCounts,
    pub mean_travel_time: f64,
    pub mean_depth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub chains: Vec<Chain>,
    pub summaries: Vec<ChainSummary>,
    pub summary: Value,
    pub chain_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

fn summarize(index: usize, file: String, chain: &Chain, depths: Option<&[usize]>) -> ChainSummary {
    let (report, ess_error): (Option<EssReport>, Option<String>) = match min_ess_report(chain, None) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ChainSummary {
        index,
        file,
        rows: chain.len(),
        wall_seconds: chain.wall_seconds,
        min_ess: report.as_ref().map(|r| r.min_ess),
        argmin_dim: report.as_ref().map(|r| r.argmin_dim),
        ess_per_second: report.as_ref().map(|r| r.ess_per_second).filter(|x| x.is_finite()),
        per_dim_ess: report.map(|r| r.per_dim),
        ess_error,
        acceptance_rate: chain.acceptance_rate,
        event_counts: chain.total_counts(),
        mean_travel_time: chain.mean_travel_time(),
        mean_depth: depths.filter(|d| !d.is_empty()).map(|d| d.iter().sum::<usize>() as f64 / d.len() as f64),
    }
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.collect::<Option<_>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every chain of `cfg` on `workers` threads and writes
/// `chain_<k>.csv` plus `summary.json` into the output directory.
///
/// Chain `k` draws from stream `k` of the seed, so the CSVs do not depend on
/// the worker count.
pub fn run_config(cfg: &RunConfig, workers: usize) -> HResult<RunOutcome> {
    let target = cfg.target.build()?;
    let d = target.dim();
    let x0 = cfg.x0.clone().unwrap_or_else(|| cfg.target.default_start(d));
    if x0.len() != d {
        return Err(ConfigError::new("x0", format!("expected {d} entries, got {}", x0.len())).into());
    }
    let flow = cfg.surrogate.build(d)?;
    let gaussian = plain_gaussian(cfg);
    check_feasible(target.constraints(), &x0)?;
    let base_step = match &cfg.sampler {
        SamplerSpec::Nuts {
            base_step: BaseStep::Fixed(h), ..
        } => Some(*h),
        SamplerSpec::Nuts {
            base_step: BaseStep::Auto,
            pilot_iterations,
            pilot_travel_time,
            ..
        } => Some(auto_base_step(target.as_ref(), &x0, *pilot_iterations, *pilot_travel_time, mix(cfg.seed, PILOT_KEY))?),
        _ => None,
    };
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    let results: Vec<Result<(Chain, ChainSummary, PathBuf)>> = pool(workers)?.install(|| {
        (0..cfg.chains)
            .into_par_iter()
            .map(|k| {
                let mut rng = chain_rng(cfg.seed, k as u64);
                let (chain, depths) = sample_chain(
                    &cfg.sampler,
                    target.as_ref(),
                    gaussian.as_ref(),
                    flow.as_ref(),
                    &cfg.solver,
                    base_step,
                    cfg.iterations,
                    &x0,
                    &mut rng,
                )?;
                let chain = chain.thinned(cfg.thin);
                let name = format!("chain_{k}.csv");
                let path = cfg.output_dir.join(&name);
                write_chain_csv(&path, &chain)?;
                let summary = summarize(k, name, &chain, depths.as_deref());
                Ok((chain, summary, path))
            })
            .collect()
    });
    let mut chains = Vec::with_capacity(cfg.chains);
    let mut summaries = Vec::with_capacity(cfg.chains);
    let mut chain_paths = Vec::with_capacity(cfg.chains);
    for r in results {
        let (c, s, p) = r?;
        chains.push(c);
        summaries.push(s);
        chain_paths.push(p);
    }
    let mut totals = EventCounts::default();
    summaries.iter().for_each(|s| totals += s.event_counts);
    let min_ess = summaries.iter().map(|s| s.min_ess).collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(f64::INFINITY, f64::min));
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "sampler": cfg.sampler.name(),
        "seed": cfg.seed,
        "dim": d,
        "iterations": cfg.iterations,
        "thin": cfg.thin,
        "chains": cfg.chains,
        "base_step": base_step,
        "min_ess": min_ess,
        "ess_per_second": mean_of(summaries.iter().map(|s| s.ess_per_second)),
        "acceptance_rate": mean_of(summaries.iter().map(|s| s.acceptance_rate)),
        "event_counts": totals,
        "per_chain": summaries,
        "config": cfg.raw,
    });
    let summary_path = cfg.output_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))? + "\n";
    std::fs::write(&summary_path, text).map_err(Error::from)?;
    Ok(RunOutcome {
        chains,
        summaries,
        summary,
        chain_paths,
        summary_path,
    })
}

/// `converge`: divergence curve written to `convergence.csv`.
pub fn run_converge(cfg: &ConvergeConfig, workers: usize) -> HResult<(Vec<CurveRow>, PathBuf)> {
    let target = cfg.target.build()?;
    let flow = cfg.surrogate.build(target.dim())?;
    let options = CouplingOptions {
        match_tol: cfg.match_tol,
        grid_points: cfg.grid_points,
        solver: cfg.solver.clone(),
    };
    let rows = pool(workers)?.install(|| divergence_curve(&cfg.delta_t, cfg.replications, cfg.horizon, flow.as_ref(), target.as_ref(), cfg.seed, &options))?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    let path = cfg.output_dir.join("convergence.csv");
    write_rows(&path, &rows)?;
    Ok((rows, path))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub sampler: String,
    pub travel_time: Option<f64>,
    pub refresh_rate: Option<f64>,
    pub min_ess: f64,
    pub ess_per_second: f64,
    /// Relative to the BPS setting with the best ESS per second.
    pub relative_ess: f64,
    pub relative_ess_per_second: f64,
}

/// `benchmark`: HBPS over the travel-time grid and BPS over the refresh
/// grid, each averaged over `repeats` seeds. Settings run one at a time so
/// that wall-clock timings are not distorted by contention.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> HResult<(Vec<BenchmarkRow>, PathBuf)> {
    let target = cfg.target.build()?;
    let d = target.dim();
    let x0 = cfg.x0.clone().unwrap_or_else(|| cfg.target.default_start(d));
    check_feasible(target.constraints(), &x0)?;
    let average = |spec: &SamplerSpec| -> Result<(f64, f64)> {
        let (mut ess, mut eps) = (0.0, 0.0);
        for r in 0..cfg.repeats {
            let mut rng = chain_rng(mix(cfg.seed, r as u64), 0);
            let (chain, _) = sample_chain(spec, target.as_ref(), None, &crate::surrogates::LinearFlow, &cfg.solver, None, cfg.iterations, &x0, &mut rng)?;
            let report = min_ess_report(&chain, None)?;
            ess += report.min_ess;
            eps += report.ess_per_second;
        }
        Ok((ess / cfg.repeats as f64, eps / cfg.repeats as f64))
    };
    let mut rows = Vec::new();
    for &t in &cfg.travel_times {
        let (min_ess, ess_per_second) = average(&SamplerSpec::Hbps { travel_time: t })?;
        rows.push(BenchmarkRow {
            sampler: "hbps".into(),
            travel_time: Some(t),
            refresh_rate: None,
            min_ess,
            ess_per_second,
            relative_ess: 0.0,
            relative_ess_per_second: 0.0,
        });
    }
    for &lambda in &cfg.refresh_rates {
        let (min_ess, ess_per_second) = average(&SamplerSpec::Bps {
            refresh_rate: lambda,
            total_time: cfg.bps_total_time,
            thinning: false,
        })?;
        rows.push(BenchmarkRow {
            sampler: "bps".into(),
            travel_time: Some(cfg.bps_total_time),
            refresh_rate: Some(lambda),
            min_ess,
            ess_per_second,
            relative_ess: 0.0,
            relative_ess_per_second: 0.0,
        });
    }
    let reference = rows
        .iter()
        .filter(|r| r.sampler == "bps")
        .max_by(|a, b| a.ess_per_second.total_cmp(&b.ess_per_second))
        .cloned()
        .expect("refresh grid is nonempty");
    for r in &mut rows {
        r.relative_ess = r.min_ess / reference.min_ess;
        r.relative_ess_per_second = r.ess_per_second / reference.ess_per_second;
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    let path = cfg.output_dir.join("benchmark.csv");
    write_rows(&path, &rows)?;
    Ok((rows, path))
}
