//! Hamiltonian bouncy particle sampler: the bouncy dynamics with a flat
//! surrogate, so positions move on straight lines and the discrepancy is the
//! target potential itself.
//!
//! On log-concave targets `g(t) = U(x + t v)` is convex and the bounce time
//! is found without a scan grid: if `g'(0) <= 0` the turning point is located
//! first, and the level is then crossed exactly once on the rising branch.

use rand::Rng;

use crate::chain::Chain;
use crate::dynamics::{AugmentedState, BounceMethod, BouncyDynamics, BouncySampler, Trajectory};
use crate::error::{Error, Result};
use crate::line::{Increment, LineFn};
use crate::roots::{convex_passage, scan_first_root, Reference, SolverConfig};
use crate::surrogates::LinearFlow;
use crate::targets::Target;
use crate::vecops::norm;

/// Tolerances of the HBPS solvers; the same knobs as the generic engine.
pub type HbpsSolverConfig = SolverConfig;

/// Smallest `t` in `(0, horizon]` with `U(x + t v) - U(x) = p`.
///
/// Uses the convex solver when the target is log-concave and has a closed
/// form line restriction, and the generic scan otherwise (including when a
/// negative curvature is met along the way).
pub fn hbps_bounce_time(x: &[f64], v: &[f64], p: f64, target: &dyn Target, horizon: f64, cfg: &HbpsSolverConfig) -> Result<Option<f64>> {
    if !(p >= 0.0) {
        return Err(Error::InvalidInput(format!("inertia must be >= 0, got {p}")));
    }
    let dynamics = BouncyDynamics::new(&LinearFlow, target).with_solver(cfg);
    let Some(line) = target.line(x, v) else {
        return dynamics.bounce_time(&AugmentedState::new(x.to_vec(), v.to_vec(), p), horizon);
    };
    let h = Increment::new(line);
    if target.is_log_concave() {
        let seed = cfg.scan_step.unwrap_or_else(|| (0.1 * horizon).min(1.0 / (1.0 + h.slope(0.0).abs())));
        match convex_passage(&h, p, Reference::Start, horizon, seed, cfg) {
            Err(Error::NotLogConcave { .. }) | Err(Error::Unsupported(_)) => {}
            other => return other,
        }
    }
    let step = cfg.scan_step_for(horizon, norm(&target.grad(x)), norm(v));
    scan_first_root(&h, p, horizon, step, cfg)
}

/// Runs HBPS dynamics for time `travel_time`, reflecting off the target's
/// half-space constraints. Without constraints this is the plain engine.
pub fn constrained_simulate(travel_time: f64, state: &AugmentedState, target: &dyn Target, cfg: &HbpsSolverConfig, record_events: bool) -> Result<Trajectory> {
    BouncyDynamics::new(&LinearFlow, target)
        .with_solver(cfg)
        .with_method(BounceMethod::Exact)
        .recording(record_events)
        .simulate(travel_time, state)
}

/// Fixed travel-time HBPS sampler with exact bounce solving.
#[derive(Debug, Clone)]
pub struct Hbps<'a> {
    pub target: &'a dyn Target,
    pub travel_time: f64,
    pub solver: HbpsSolverConfig,
}

impl<'a> Hbps<'a> {
    pub fn new(target: &'a dyn Target, travel_time: f64) -> Self {
        Self {
            target,
            travel_time,
            solver: SolverConfig::default(),
        }
    }

    pub fn dynamics(&self) -> BouncyDynamics<'_> {
        BouncyDynamics::new(&LinearFlow, self.target)
            .with_solver(&self.solver)
            .with_method(BounceMethod::Exact)
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, x0: &[f64], rng: &mut R) -> Result<Chain> {
        self.solver.validate()?;
        BouncySampler::new(self.dynamics(), self.travel_time).sample_with_rng(n, x0, rng)
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut crate::rng::chain_rng(seed, 0))
    }
}
