//! Bouncy particle sampler: straight-line motion, velocity reflections at
//! the events of a Poisson process with rate `[v' grad U(x + t v)]^+`, and
//! full velocity refreshments at rate `refresh_rate`.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::chain::{Chain, EventCounts};
use crate::dynamics::{reflect, BouncyDynamics};
use crate::error::{Error, Result};
use crate::line::{LineFn, LinePoint};
use crate::roots::{convex_passage, scan_positive_part, turning_point, Reference, SolverConfig};
use crate::rng::{chain_rng, draw_exp, draw_velocity};
use crate::surrogates::{LinearFlow, SurrogateFlow};
use crate::targets::{check_feasible, Target};
use crate::vecops::{axpy, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct BpsConfig {
    pub refresh_rate: f64,
    /// Trajectory time between stored samples.
    pub total_time: f64,
    pub solver: SolverConfig,
    /// Draw events from the superposed rate and pick refreshments with
    /// probability `refresh_rate / rate(t)` instead of a competing clock.
    pub thinning: bool,
}

impl BpsConfig {
    pub fn new(refresh_rate: f64, total_time: f64) -> Self {
        Self {
            refresh_rate,
            total_time,
            solver: SolverConfig::default(),
            thinning: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.refresh_rate >= 0.0) || !self.refresh_rate.is_finite() {
            return Err(Error::InvalidInput(format!("refresh_rate must be finite and >= 0, got {}", self.refresh_rate)));
        }
        if !(self.total_time > 0.0) || !self.total_time.is_finite() {
            return Err(Error::InvalidInput(format!("total_time must be positive, got {}", self.total_time)));
        }
        self.solver.validate()
    }
}

fn seed_step(h: &dyn LineFn, horizon: f64, cfg: &SolverConfig) -> f64 {
    cfg.scan_step.unwrap_or_else(|| (0.1 * horizon).min(1.0 / (1.0 + h.slope(0.0).abs())))
}

/// First `t` in `(0, horizon]` with `int_0^t [v' grad U(x + s v)]^+ ds = e`.
pub fn bps_event_time(x: &[f64], v: &[f64], target: &dyn Target, e: f64, horizon: f64, cfg: &SolverConfig) -> Result<Option<f64>> {
    pdmp_event_time(&LinearFlow, target, x, v, e, horizon, cfg)
}

/// Event time of the piecewise-deterministic process that follows `flow`
/// and jumps at rate `[v_t' grad U_d(x_t)]^+`; for the linear flow this is
/// [`bps_event_time`].
pub fn pdmp_event_time(flow: &dyn SurrogateFlow, target: &dyn Target, x: &[f64], v: &[f64], e: f64, horizon: f64, cfg: &SolverConfig) -> Result<Option<f64>> {
    if !(e > 0.0) {
        return Err(Error::InvalidInput(format!("event level must be positive, got {e}")));
    }
    let dynamics = BouncyDynamics::new(flow, target).with_solver(cfg);
    let h = dynamics.depletion_line(x, v);
    if flow.is_linear() && target.is_log_concave() && h.has_curvature() {
        match convex_passage(h.as_ref(), e, Reference::TurningPoint, horizon, seed_step(h.as_ref(), horizon, cfg), cfg) {
            Err(Error::NotLogConcave { .. }) | Err(Error::Unsupported(_)) => {}
            other => return other,
        }
    }
    let step = cfg.scan_step_for(horizon, norm(&dynamics.discrepancy_gradient(x)), norm(v));
    scan_positive_part(h.as_ref(), e, horizon, step, cfg)
}

/// `s -> refresh_rate * s + h(t_min + s) - h(t_min)` for a convex `h`.
struct Superposed<'a> {
    h: &'a dyn LineFn,
    t_min: f64,
    h_min: f64,
    rate: f64,
}

impl LineFn for Superposed<'_> {
    fn point(&self, s: f64) -> LinePoint {
        let p = self.h.point(self.t_min + s);
        LinePoint {
            value: self.rate * s + p.value - self.h_min,
            slope: self.rate + p.slope,
            curvature: p.curvature,
        }
    }

    fn has_curvature(&self) -> bool {
        true
    }
}

/// First event of the superposed bounce-plus-refresh process driven by the
/// unit exponential `e`, with the total rate at that time. Needs a
/// log-concave target with a closed-form line restriction.
fn superposed_event_time(x: &[f64], v: &[f64], target: &dyn Target, rate: f64, e: f64, horizon: f64, cfg: &SolverConfig) -> Result<Option<(f64, f64)>> {
    let h = target
        .line(x, v)
        .filter(|_| target.is_log_concave())
        .ok_or_else(|| Error::Unsupported("thinned refreshment needs a log-concave target with a line restriction".into()))?;
    let h = crate::line::Increment::new(h);
    let t_min = turning_point(&h, horizon, seed_step(&h, horizon, cfg), cfg)?.unwrap_or(horizon);
    if rate * t_min >= e {
        return Ok(Some((e / rate, rate)));
    }
    if t_min >= horizon {
        return Ok(None);
    }
    let sup = Superposed {
        h: &h,
        t_min,
        h_min: h.value(t_min),
        rate,
    };
    let left = horizon - t_min;
    match convex_passage(&sup, e - rate * t_min, Reference::Start, left, seed_step(&sup, left, cfg), cfg)? {
        None => Ok(None),
        Some(s) => Ok(Some((t_min + s, rate + h.slope(t_min + s).max(0.0)))),
    }
}

/// Continuous-time BPS recorded every `total_time` units.
#[derive(Debug, Clone)]
pub struct Bps<'a> {
    pub target: &'a dyn Target,
    pub config: BpsConfig,
}

impl<'a> Bps<'a> {
    pub fn new(target: &'a dyn Target, config: BpsConfig) -> Self {
        Self { target, config }
    }

    /// Advances `(x, v)` by trajectory time `duration`.
    pub fn advance<R: Rng + ?Sized>(&self, duration: f64, x: &mut [f64], v: &mut Vec<f64>, rng: &mut R) -> Result<EventCounts> {
        let cfg = &self.config.solver;
        let rate = self.config.refresh_rate;
        let refresh_clock = if rate > 0.0 { Some(Exp::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?) } else { None };
        let mut counts = EventCounts::default();
        let mut elapsed = 0.0;
        while elapsed < duration {
            let remaining = duration - elapsed;
            let (t, refresh) = if self.config.thinning && rate > 0.0 {
                let e = draw_exp(rng);
                match superposed_event_time(x, v, self.target, rate, e, remaining, cfg)? {
                    None => (remaining, None),
                    Some((t, total)) => (t, Some(rng.random::<f64>() * total < rate)),
                }
            } else {
                let e = draw_exp(rng);
                let bounce = bps_event_time(x, v, self.target, e, remaining, cfg)?;
                let refresh = refresh_clock.as_ref().map(|c| c.sample(rng)).filter(|t| *t < remaining);
                match (bounce, refresh) {
                    (Some(tb), Some(tr)) if tr < tb => (tr, Some(true)),
                    (Some(tb), _) => (tb, Some(false)),
                    (None, Some(tr)) => (tr, Some(true)),
                    (None, None) => (remaining, None),
                }
            };
            axpy(t, v, x);
            elapsed += t;
            match refresh {
                None => elapsed = duration,
                Some(true) => {
                    *v = draw_velocity(rng, x.len());
                    counts.refreshes += 1;
                }
                Some(false) => {
                    *v = reflect(v, &self.target.grad(x))?;
                    counts.bounces += 1;
                }
            }
            if counts.total() > cfg.max_events {
                return Err(Error::EventStorm { limit: cfg.max_events });
            }
        }
        Ok(counts)
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, x0: &[f64], rng: &mut R) -> Result<Chain> {
        self.config.validate()?;
        if n == 0 {
            return Err(Error::InvalidInput("number of iterations must be >= 1".into()));
        }
        let d = self.target.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
        }
        if !self.target.constraints().is_empty() {
            return Err(Error::Unsupported("the bouncy particle sampler does not handle constraints".into()));
        }
        check_feasible(self.target.constraints(), x0)?;
        let clock = Instant::now();
        let mut chain = Chain::new(d, "bps");
        let mut x = x0.to_vec();
        let mut v = draw_velocity(rng, d);
        for _ in 0..n {
            let counts = self.advance(self.config.total_time, &mut x, &mut v, rng)?;
            chain.push(&x, counts, self.config.total_time);
        }
        chain.wall_seconds = clock.elapsed().as_secs_f64();
        Ok(chain)
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut chain_rng(seed, 0))
    }
}
