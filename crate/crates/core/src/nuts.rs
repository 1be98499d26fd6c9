//! No-U-Turn travel-time selection on top of HBPS dynamics.
//!
//! The path is doubled in random time directions, `base_step` of dynamics per
//! state, until its ends start moving toward each other. Every state on the
//! path has the same augmented energy, so the returned state is drawn
//! uniformly from the path with no slice variable.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Chain, EventCounts};
use crate::dynamics::{AugmentedState, BounceMethod, BouncyDynamics};
use crate::error::{Error, Result};
use crate::hbps::Hbps;
use crate::rng::{chain_rng, draw_exp, draw_velocity};
use crate::roots::SolverConfig;
use crate::surrogates::LinearFlow;
use crate::targets::{check_feasible, Target};
use crate::vecops::{dot, sub};

#[derive(Debug, Clone, PartialEq)]
pub struct NutsConfig {
    pub base_step: f64,
    pub max_depth: usize,
    pub uturn_tol: f64,
    pub solver: SolverConfig,
}

impl NutsConfig {
    pub fn new(base_step: f64) -> Self {
        Self {
            base_step,
            max_depth: 10,
            uturn_tol: 0.0,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0) || !self.base_step.is_finite() {
            return Err(Error::InvalidInput(format!("base_step must be positive, got {}", self.base_step)));
        }
        if self.max_depth == 0 || self.max_depth > 30 {
            return Err(Error::InvalidInput(format!("max_depth must be in 1..=30, got {}", self.max_depth)));
        }
        self.solver.validate()
    }
}

const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITERS: usize = 10_000;

/// `0.1 * sqrt(lambda_max)` of a covariance estimate, by power iteration.
pub fn heuristic_base_step(covariance: &DMatrix<f64>) -> Result<f64> {
    let d = covariance.nrows();
    if d == 0 || covariance.ncols() != d {
        return Err(Error::InvalidInput("covariance must be a nonempty square matrix".into()));
    }
    let scale = covariance.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NotPsd(0.0));
    }
    if (covariance - covariance.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidInput("covariance must be symmetric".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut u = DVector::from_fn(d, |_, _| 1.0 + rng.random::<f64>());
    u /= u.norm();
    let mut lambda = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        let w = covariance * &u;
        let rayleigh = u.dot(&w);
        if rayleigh < -1e-10 * scale.max(1.0) {
            return Err(Error::NotPsd(rayleigh));
        }
        let n = w.norm();
        if n == 0.0 {
            return Err(Error::NotPsd(0.0));
        }
        let converged = (rayleigh - lambda).abs() <= POWER_TOL * rayleigh.abs();
        lambda = rayleigh;
        u = w / n;
        if converged {
            break;
        }
    }
    if !(lambda > 0.0) {
        return Err(Error::NotPsd(lambda));
    }
    Ok(0.1 * lambda.sqrt())
}

/// Sample covariance of a chain's rows.
pub fn sample_covariance(chain: &Chain) -> DMatrix<f64> {
    let d = chain.dim();
    let n = chain.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in chain.rows() {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in chain.rows() {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n - 1.0).max(1.0)
}

/// Runs `pilot_iterations` of plain HBPS and applies [`heuristic_base_step`]
/// to the sample covariance.
pub fn auto_base_step(target: &dyn Target, x0: &[f64], pilot_iterations: usize, pilot_travel_time: f64, seed: u64) -> Result<f64> {
    let pilot = Hbps::new(target, pilot_travel_time).sample(pilot_iterations.max(2), x0, seed)?;
    heuristic_base_step(&sample_covariance(&pilot))
}

/// A finished No-U-Turn path in time order.
#[derive(Debug, Clone)]
pub struct NutsPath {
    pub states: Vec<AugmentedState>,
    /// Position of the starting state in `states`.
    pub start: usize,
    /// Number of doublings attempted (including a discarded last one).
    pub depth: usize,
    pub counts: EventCounts,
}

impl NutsPath {
    /// Trajectory time spanned by the path.
    pub fn total_time(&self, base_step: f64) -> f64 {
        (self.states.len() - 1) as f64 * base_step
    }
}

fn uturn(left: &AugmentedState, right: &AugmentedState, tol: f64) -> bool {
    let dx = sub(&right.x, &left.x);
    dot(&dx, &left.v) < tol || dot(&dx, &right.v) < tol
}

/// U-turn anywhere in the balanced binary tree over `block`.
fn subtree_uturn(block: &[AugmentedState], tol: f64) -> bool {
    if block.len() < 2 {
        return false;
    }
    if uturn(&block[0], &block[block.len() - 1], tol) {
        return true;
    }
    let half = block.len() / 2;
    subtree_uturn(&block[..half], tol) || subtree_uturn(&block[half..], tol)
}

/// Builds a path from `start` with doubling directions from `forward`
/// (`true` extends forward in time).
pub fn build_path(
    dynamics: &BouncyDynamics<'_>,
    start: &AugmentedState,
    config: &NutsConfig,
    mut forward: impl FnMut() -> bool,
) -> Result<NutsPath> {
    let step = |s: &AugmentedState, fwd: bool, counts: &mut EventCounts| -> Result<AugmentedState> {
        if fwd {
            let tr = dynamics.simulate(config.base_step, s)?;
            *counts += tr.counts;
            Ok(tr.state)
        } else {
            let tr = dynamics.simulate(config.base_step, &s.reversed())?;
            *counts += tr.counts;
            Ok(tr.state.reversed())
        }
    };
    let mut states = vec![start.clone()];
    let mut begin = 0usize;
    let mut counts = EventCounts::default();
    let mut depth = 0;
    for j in 0..config.max_depth {
        depth = j + 1;
        let fwd = forward();
        let size = 1usize << j;
        let mut fresh = Vec::with_capacity(size);
        let mut edge = if fwd { states.last().unwrap().clone() } else { states[0].clone() };
        for _ in 0..size {
            edge = step(&edge, fwd, &mut counts)?;
            fresh.push(edge.clone());
        }
        if !fwd {
            fresh.reverse();
        }
        if subtree_uturn(&fresh, config.uturn_tol) {
            break;
        }
        if fwd {
            states.extend(fresh);
        } else {
            begin += size;
            fresh.extend(states);
            states = fresh;
        }
        if uturn(&states[0], &states[states.len() - 1], config.uturn_tol) {
            break;
        }
    }
    Ok(NutsPath {
        states,
        start: begin,
        depth,
        counts,
    })
}

/// Result of one No-U-Turn transition.
#[derive(Debug, Clone)]
pub struct NutsStep {
    pub state: AugmentedState,
    pub depth: usize,
    pub total_time: f64,
    pub counts: EventCounts,
}

pub fn nuts_step<R: Rng + ?Sized>(x: &[f64], config: &NutsConfig, target: &dyn Target, rng: &mut R) -> Result<NutsStep> {
    let dynamics = BouncyDynamics::new(&LinearFlow, target)
        .with_solver(&config.solver)
        .with_method(BounceMethod::Exact);
    let v = draw_velocity(rng, x.len());
    let p = draw_exp(rng);
    let start = AugmentedState::new(x.to_vec(), v, p);
    let mut dirs = Vec::with_capacity(config.max_depth);
    for _ in 0..config.max_depth {
        dirs.push(rng.random_bool(0.5));
    }
    let mut it = dirs.into_iter();
    let path = build_path(&dynamics, &start, config, || it.next().unwrap_or(true))?;
    let pick = rng.random_range(0..path.states.len());
    Ok(NutsStep {
        total_time: path.total_time(config.base_step),
        depth: path.depth,
        counts: path.counts,
        state: path.states[pick].clone(),
    })
}

#[derive(Debug, Clone)]
pub struct NutsSampler<'a> {
    pub target: &'a dyn Target,
    pub config: NutsConfig,
}

impl<'a> NutsSampler<'a> {
    pub fn new(target: &'a dyn Target, config: NutsConfig) -> Self {
        Self { target, config }
    }

    /// Chain plus the tree depth of every iteration.
    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, x0: &[f64], rng: &mut R) -> Result<(Chain, Vec<usize>)> {
        self.config.validate()?;
        if n == 0 {
            return Err(Error::InvalidInput("number of iterations must be >= 1".into()));
        }
        let d = self.target.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
        }
        check_feasible(self.target.constraints(), x0)?;
        let clock = Instant::now();
        let mut chain = Chain::new(d, "hbps-nuts");
        let mut depths = Vec::with_capacity(n);
        let mut x = x0.to_vec();
        for _ in 0..n {
            let s = nuts_step(&x, &self.config, self.target, rng)?;
            x = s.state.x;
            depths.push(s.depth);
            chain.push(&x, s.counts, s.total_time);
        }
        chain.wall_seconds = clock.elapsed().as_secs_f64();
        Ok((chain, depths))
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut chain_rng(seed, 0)).map(|(c, _)| c)
    }
}
