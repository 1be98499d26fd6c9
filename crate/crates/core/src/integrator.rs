//! Symmetric splitting integrator for bouncy dynamics.
//!
//! One step of size `dt` flows for `dt/2`, updates the inertia with the
//! midpoint rate `p' = p - dt * grad U_d(x_mid)' v_mid` (reflecting the
//! velocity instead when `p' <= 0`), and flows for another `dt/2`. The step is
//! reversible and volume preserving but only approximately energy
//! conserving, so proposals built from it go through a Metropolis test on
//! the augmented energy.

use std::time::Instant;

use rand::Rng;

use crate::chain::{Chain, EventCounts};
use crate::dynamics::{reflect, AugmentedState};
use crate::error::{Error, Result};
use crate::rng::{chain_rng, draw_exp, draw_velocity};
use crate::surrogates::{LeapfrogFlow, SurrogateFlow};
use crate::targets::Target;
use crate::vecops::{dot, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerFlow {
    Exact,
    /// Kick-drift-kick on `U_*` with this many substeps per half step.
    Leapfrog { substeps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub step: f64,
    pub steps_per_proposal: usize,
    pub inner_flow: InnerFlow,
}

impl SplitConfig {
    pub fn new(step: f64, steps_per_proposal: usize) -> Self {
        Self {
            step,
            steps_per_proposal,
            inner_flow: InnerFlow::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step)));
        }
        if self.steps_per_proposal == 0 {
            return Err(Error::InvalidInput("steps_per_proposal must be >= 1".into()));
        }
        if let InnerFlow::Leapfrog { substeps: 0 } = self.inner_flow {
            return Err(Error::InvalidInput("leapfrog_substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One splitting step. Records whether the reflection branch was taken.
pub fn split_step_with_branch(dt: f64, state: &AugmentedState, flow: &dyn SurrogateFlow, target: &dyn Target) -> Result<(AugmentedState, bool)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
    }
    let mut x = state.x.clone();
    let mut v = state.v.clone();
    let half = 0.5 * dt;
    flow.advance(half, &mut x, &mut v);
    let mut g = target.grad(&x);
    if !flow.is_linear() {
        let mut gs = vec![0.0; x.len()];
        flow.gradient(&x, &mut gs);
        for (a, b) in g.iter_mut().zip(&gs) {
            *a -= b;
        }
    }
    let p_new = state.p - dt * dot(&g, &v);
    let mut p = state.p;
    let bounced = !(p_new > 0.0);
    if bounced {
        v = reflect(&v, &g)?;
    } else {
        p = p_new;
    }
    flow.advance(half, &mut x, &mut v);
    Ok((AugmentedState { x, v, p }, bounced))
}

pub fn split_step(dt: f64, state: &AugmentedState, flow: &dyn SurrogateFlow, target: &dyn Target) -> Result<AugmentedState> {
    split_step_with_branch(dt, state, flow, target).map(|(s, _)| s)
}

/// `steps` consecutive splitting steps; returns the end state and the number
/// of reflections.
pub fn split_trajectory(dt: f64, steps: usize, state: &AugmentedState, flow: &dyn SurrogateFlow, target: &dyn Target) -> Result<(AugmentedState, usize)> {
    let mut s = state.clone();
    let mut bounces = 0;
    for _ in 0..steps {
        let (next, b) = split_step_with_branch(dt, &s, flow, target)?;
        s = next;
        bounces += usize::from(b);
    }
    Ok((s, bounces))
}

/// Metropolized splitting sampler.
#[derive(Debug, Clone)]
pub struct SplitSampler<'a> {
    pub flow: &'a dyn SurrogateFlow,
    pub target: &'a dyn Target,
    pub config: SplitConfig,
}

impl<'a> SplitSampler<'a> {
    pub fn new(flow: &'a dyn SurrogateFlow, target: &'a dyn Target, config: SplitConfig) -> Self {
        Self { flow, target, config }
    }

    fn energy(&self, s: &AugmentedState) -> f64 {
        self.target.potential(&s.x) + 0.5 * norm_sq(&s.v) + s.p
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
            return Err(Error::Unsupported("the splitting integrator does not handle constraints".into()));
        }
        let leapfrog;
        let flow: &dyn SurrogateFlow = match self.config.inner_flow {
            InnerFlow::Exact => self.flow,
            InnerFlow::Leapfrog { substeps } => {
                leapfrog = LeapfrogFlow::new(self.flow, substeps)?;
                &leapfrog
            }
        };
        let clock = Instant::now();
        let mut chain = Chain::new(d, "hbps-split");
        let mut x = x0.to_vec();
        let mut accepted = 0usize;
        let travel = self.config.step * self.config.steps_per_proposal as f64;
        for _ in 0..n {
            let v = draw_velocity(rng, d);
            let p = draw_exp(rng);
            let start = AugmentedState { x: x.clone(), v, p };
            let u: f64 = rng.random();
            let mut counts = EventCounts::default();
            match split_trajectory(self.config.step, self.config.steps_per_proposal, &start, flow, self.target) {
                Ok((end, bounces)) => {
                    counts.bounces = bounces;
                    let log_ratio = self.energy(&start) - self.energy(&end);
                    if log_ratio.is_finite() && u.ln() < log_ratio {
                        x = end.x;
                        accepted += 1;
                    }
                }
                // a reflection against a vanishing gradient rejects the proposal
                Err(Error::ZeroGradient { .. }) => {}
                Err(e) => return Err(e),
            }
            chain.push(&x, counts, travel);
        }
        chain.wall_seconds = clock.elapsed().as_secs_f64();
        chain.acceptance_rate = Some(accepted as f64 / n as f64);
        Ok(chain)
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut chain_rng(seed, 0))
    }
}
