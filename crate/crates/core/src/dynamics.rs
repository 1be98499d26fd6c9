//! Bouncy Hamiltonian dynamics on the augmented space `(x, v, p)`.
//!
//! Position and velocity follow a surrogate flow. The inertia `p` absorbs the
//! discrepancy potential `U_d = U_tar - U_*` along the way,
//! `p_t = p_0 + U_d(x_0) - U_d(x_t)`, and when it runs out the velocity is
//! reflected against `grad U_d`. The resulting map conserves
//! `U_tar(x) + |v|^2/2 + p`, is reversible under `v -> -v` and preserves
//! volume, so trajectories are rejection-free proposals.

use std::time::Instant;

use rand::Rng;

use crate::chain::{Chain, EventCounts};
use crate::error::{Error, Result};
use crate::line::{Increment, LineFn, LinePoint};
use crate::rng::{chain_rng, draw_exp, draw_velocity};
use crate::roots::{convex_passage, scan_first_root, Reference, SolverConfig};
use crate::surrogates::SurrogateFlow;
use crate::targets::{boundary_hit, check_feasible, Target};
use crate::vecops::{dot, norm, norm_sq};

/// Gradients with norm at or below this are treated as zero by [`reflect`].
pub const ZERO_GRADIENT_TOL: f64 = 1e-14;

/// Boundary hits within this of a bounce are processed first.
pub const TIE_TOL: f64 = 1e-12;

/// A point of the augmented space.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub p: f64,
}

impl AugmentedState {
    pub fn new(x: Vec<f64>, v: Vec<f64>, p: f64) -> Self {
        Self { x, v, p }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Same position and inertia with the velocity negated.
    pub fn reversed(&self) -> Self {
        Self {
            x: self.x.clone(),
            v: self.v.iter().map(|a| -a).collect(),
            p: self.p,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.x.len() != dim || self.v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: if self.x.len() != dim { self.x.len() } else { self.v.len() },
            });
        }
        if !(self.p >= 0.0) || !self.p.is_finite() {
            return Err(Error::InvalidInput(format!("inertia must be finite and >= 0, got {}", self.p)));
        }
        if self.x.iter().chain(&self.v).any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("state contains non-finite entries".into()));
        }
        Ok(())
    }

    /// `U_tar(x) + |v|^2/2 + p`.
    pub fn energy(&self, target: &dyn Target) -> f64 {
        target.potential(&self.x) + 0.5 * norm_sq(&self.v) + self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Bounce,
    Boundary,
    Refresh,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Trajectory time of the event.
    pub time: f64,
    pub kind: EventKind,
    /// `grad U_d` at a bounce, the face normal at a boundary event.
    pub gradient_at_event: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state: AugmentedState,
    /// Empty unless event recording is enabled.
    pub events: Vec<EventRecord>,
    pub counts: EventCounts,
}

/// `v - 2 (v'g / |g|^2) g`: mirror `v` in the hyperplane orthogonal to `g`.
pub fn reflect(v: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let gg = norm_sq(g);
    let gn = gg.sqrt();
    if !(gn > ZERO_GRADIENT_TOL) {
        return Err(Error::ZeroGradient { norm: gn });
    }
    let c = 2.0 * dot(v, g) / gg;
    Ok(v.iter().zip(g).map(|(a, b)| a - c * b).collect())
}

/// How bounce times are located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BounceMethod {
    /// Grid scan plus safeguarded Newton; valid for any target.
    #[default]
    Scan,
    /// Convex first-passage solver for linear flows on log-concave targets
    /// with closed-form line restrictions; falls back to `Scan` otherwise.
    Exact,
}

/// Discrepancy increment `h(t) = U_d(x_t) - U_d(x_0)` evaluated by running
/// the flow. No curvature.
struct FlowDepletion<'a> {
    flow: &'a dyn SurrogateFlow,
    target: &'a dyn Target,
    x0: Vec<f64>,
    v0: Vec<f64>,
    base: f64,
}

impl LineFn for FlowDepletion<'_> {
    fn point(&self, t: f64) -> LinePoint {
        let (xt, vt) = self.flow.flow(t, &self.x0, &self.v0);
        let mut gt = self.target.grad(&xt);
        let mut gs = vec![0.0; xt.len()];
        self.flow.gradient(&xt, &mut gs);
        for (a, b) in gt.iter_mut().zip(&gs) {
            *a -= b;
        }
        LinePoint {
            value: self.target.potential(&xt) - self.flow.potential(&xt) - self.base,
            slope: dot(&vt, &gt),
            curvature: f64::NAN,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let (xt, _) = self.flow.flow(t, &self.x0, &self.v0);
        self.target.potential(&xt) - self.flow.potential(&xt) - self.base
    }
}

/// The bouncy dynamics for one surrogate/target pair.
#[derive(Debug, Clone, Copy)]
pub struct BouncyDynamics<'a> {
    flow: &'a dyn SurrogateFlow,
    target: &'a dyn Target,
    solver: &'a SolverConfig,
    method: BounceMethod,
    record_events: bool,
}

static DEFAULT_SOLVER: std::sync::LazyLock<SolverConfig> = std::sync::LazyLock::new(SolverConfig::default);

impl<'a> BouncyDynamics<'a> {
    pub fn new(flow: &'a dyn SurrogateFlow, target: &'a dyn Target) -> Self {
        Self {
            flow,
            target,
            solver: &DEFAULT_SOLVER,
            method: BounceMethod::Scan,
            record_events: false,
        }
    }

    pub fn with_solver(mut self, solver: &'a SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_method(mut self, method: BounceMethod) -> Self {
        self.method = method;
        self
    }

    /// Keep an [`EventRecord`] for every event (diagnostics).
    pub fn recording(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn flow(&self) -> &'a dyn SurrogateFlow {
        self.flow
    }

    pub fn target(&self) -> &'a dyn Target {
        self.target
    }

    pub fn solver(&self) -> &'a SolverConfig {
        self.solver
    }

    pub fn method(&self) -> BounceMethod {
        self.method
    }

    pub fn discrepancy_potential(&self, x: &[f64]) -> f64 {
        self.target.potential(x) - self.flow.potential(x)
    }

    pub fn discrepancy_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.target.grad(x);
        if !self.flow.is_linear() {
            let mut gs = vec![0.0; x.len()];
            self.flow.gradient(x, &mut gs);
            for (a, b) in g.iter_mut().zip(&gs) {
                *a -= b;
            }
        }
        g
    }

    /// `h(t) = U_d(x_t) - U_d(x)` along the surrogate flow from `(x, v)`.
    pub fn depletion_line(&self, x: &[f64], v: &[f64]) -> Box<dyn LineFn + 'a> {
        if self.flow.is_linear() {
            if let Some(line) = self.target.line(x, v) {
                return Box::new(Increment::new(line));
            }
        }
        Box::new(FlowDepletion {
            flow: self.flow,
            target: self.target,
            x0: x.to_vec(),
            v0: v.to_vec(),
            base: self.discrepancy_potential(x),
        })
    }

    /// Inertia after flowing for `t` without bouncing; negative once depleted.
    pub fn inertia_at(&self, t: f64, state: &AugmentedState) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(state.p);
        }
        Ok(state.p - self.depletion_line(&state.x, &state.v).value(t))
    }

    /// Smallest `t` in `(0, horizon]` at which the inertia runs out.
    pub fn bounce_time(&self, state: &AugmentedState, horizon: f64) -> Result<Option<f64>> {
        state.validate(self.target.dim())?;
        let h = self.depletion_line(&state.x, &state.v);
        self.solve_depletion(&h, state.p, horizon, &state.x, &state.v)
    }

    pub(crate) fn solve_depletion(&self, h: &dyn LineFn, p: f64, horizon: f64, x: &[f64], v: &[f64]) -> Result<Option<f64>> {
        let exact = self.method == BounceMethod::Exact && self.flow.is_linear() && self.target.is_log_concave() && h.has_curvature();
        if exact {
            // the convex solver only uses the step to seed its brackets
            let seed = self.solver.scan_step.unwrap_or_else(|| (0.1 * horizon).min(1.0 / (1.0 + h.slope(0.0).abs())));
            match convex_passage(h, p, Reference::Start, horizon, seed, self.solver) {
                Err(Error::NotLogConcave { .. }) | Err(Error::Unsupported(_)) => {}
                other => return other,
            }
        }
        let step = self.solver.scan_step_for(horizon, norm(&self.discrepancy_gradient(x)), norm(v));
        scan_first_root(h, p, horizon, step, self.solver)
    }

    /// Runs the dynamics for trajectory time `travel_time`.
    ///
    /// A bounce landing exactly on `travel_time` is applied, so the returned
    /// state is post-bounce (`p = 0`, reflected velocity).
    pub fn simulate(&self, travel_time: f64, start: &AugmentedState) -> Result<Trajectory> {
        if !(travel_time > 0.0) || !travel_time.is_finite() {
            return Err(Error::InvalidInput(format!("travel time must be positive, got {travel_time}")));
        }
        start.validate(self.target.dim())?;
        let constraints = self.target.constraints();
        if !constraints.is_empty() {
            if !self.flow.is_linear() {
                return Err(Error::Unsupported("constraints require the linear flow".into()));
            }
            check_feasible(constraints, &start.x)?;
        }

        let mut x = start.x.clone();
        let mut v = start.v.clone();
        let mut p = start.p;
        let mut tau = 0.0;
        let mut counts = EventCounts::default();
        let mut events = Vec::new();

        while tau < travel_time {
            let remaining = travel_time - tau;
            let h = self.depletion_line(&x, &v);

            if p == 0.0 && h.slope(0.0) > 0.0 {
                // inertia already exhausted while climbing: bounce in place
                let g = self.discrepancy_gradient(&x);
                v = reflect(&v, &g)?;
                if dot(&v, &g) >= 0.0 {
                    return Err(Error::DegenerateStart);
                }
                self.note(&mut events, &mut counts, tau, EventKind::Bounce, g)?;
                continue;
            }

            let wall = if constraints.is_empty() {
                None
            } else {
                boundary_hit(constraints, &x, &v)?.filter(|(t, _)| *t <= remaining)
            };
            let horizon = wall.map_or(remaining, |(t, _)| t.min(remaining));
            let bounce = if horizon > 0.0 {
                self.solve_depletion(&h, p, horizon, &x, &v)?
            } else {
                None
            };

            match (bounce, wall) {
                (b, Some((tw, k))) if b.is_none_or(|tb| tw <= tb + TIE_TOL) => {
                    p -= h.value(tw);
                    self.flow.advance(tw, &mut x, &mut v);
                    let normal = &constraints[k].normal;
                    v = reflect(&v, normal)?;
                    tau += tw;
                    self.note(&mut events, &mut counts, tau, EventKind::Boundary, normal.clone())?;
                }
                (Some(tb), _) => {
                    self.flow.advance(tb, &mut x, &mut v);
                    let g = self.discrepancy_gradient(&x);
                    v = reflect(&v, &g)?;
                    debug_assert!(dot(&v, &g) <= 1e-9 * norm(&v) * norm(&g));
                    p = 0.0;
                    tau += tb;
                    self.note(&mut events, &mut counts, tau, EventKind::Bounce, g)?;
                }
                (None, _) => {
                    p -= h.value(remaining);
                    self.flow.advance(remaining, &mut x, &mut v);
                    // inertia can dip below zero only by solver round-off
                    p = p.max(0.0);
                    tau = travel_time;
                }
            }
        }
        if self.record_events {
            events.push(EventRecord {
                time: travel_time,
                kind: EventKind::End,
                gradient_at_event: Vec::new(),
            });
        }
        Ok(Trajectory {
            state: AugmentedState { x, v, p },
            events,
            counts,
        })
    }

    fn note(&self, events: &mut Vec<EventRecord>, counts: &mut EventCounts, time: f64, kind: EventKind, g: Vec<f64>) -> Result<()> {
        match kind {
            EventKind::Bounce => counts.bounces += 1,
            EventKind::Boundary => counts.boundaries += 1,
            EventKind::Refresh => counts.refreshes += 1,
            EventKind::End => {}
        }
        if counts.total() > self.solver.max_events {
            return Err(Error::EventStorm {
                limit: self.solver.max_events,
            });
        }
        if self.record_events {
            events.push(EventRecord {
                time,
                kind,
                gradient_at_event: g,
            });
        }
        Ok(())
    }
}

/// Repeated trajectories of fixed length from fresh `v ~ N(0, I)`,
/// `p ~ Exp(1)`; the end position of each is stored. No accept step.
#[derive(Debug, Clone, Copy)]
pub struct BouncySampler<'a> {
    pub dynamics: BouncyDynamics<'a>,
    pub travel_time: f64,
}

impl<'a> BouncySampler<'a> {
    pub fn new(dynamics: BouncyDynamics<'a>, travel_time: f64) -> Self {
        Self { dynamics, travel_time }
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut chain_rng(seed, 0))
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, x0: &[f64], rng: &mut R) -> Result<Chain> {
        if n == 0 {
            return Err(Error::InvalidInput("number of iterations must be >= 1".into()));
        }
        let d = self.dynamics.target.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
        }
        check_feasible(self.dynamics.target.constraints(), x0)?;
        let clock = Instant::now();
        let mut chain = Chain::new(d, "hbps");
        let mut x = x0.to_vec();
        for _ in 0..n {
            let v = draw_velocity(rng, d);
            let p = draw_exp(rng);
            let traj = self.dynamics.simulate(self.travel_time, &AugmentedState { x, v, p })?;
            x = traj.state.x;
            chain.push(&x, traj.counts, self.travel_time);
        }
        chain.wall_seconds = clock.elapsed().as_secs_f64();
        Ok(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogates::{HarmonicFlow, LinearFlow};
    use crate::targets::GaussianTarget;
    use crate::vecops::max_abs_diff;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(reflect(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
        assert_eq!(reflect(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(reflect(&[1.0, 0.0], &[0.0, 1e-15]).unwrap_err(), Error::ZeroGradient { .. }));
    }

    #[test]
    fn inertia_closed_form() {
        let g = GaussianTarget::isotropic(2);
        let dynamics = BouncyDynamics::new(&LinearFlow, &g);
        let s = AugmentedState::new(vec![1.0, 0.0], vec![1.0, 0.0], 2.0);
        assert!((dynamics.inertia_at(1.0, &s).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dynamics.inertia_at(0.0, &s).unwrap(), 2.0);
        // surrogate equal to target
        let harmonic = HarmonicFlow::standard(2);
        let same = BouncyDynamics::new(&harmonic, &g);
        assert!((same.inertia_at(3.7, &s).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bounce_time_examples() {
        let g = GaussianTarget::isotropic(2);
        for method in [BounceMethod::Scan, BounceMethod::Exact] {
            let d = BouncyDynamics::new(&LinearFlow, &g).with_method(method);
            let s = AugmentedState::new(vec![1.0, 0.0], vec![1.0, 0.0], 1.5);
            let t1 = d.bounce_time(&s, 10.0).unwrap();
            assert!((t1.unwrap() - 1.0).abs() < 1e-12, "{method:?} {t1:?}");
            let s = AugmentedState::new(vec![1.0, 0.0], vec![-1.0, 0.0], 0.1);
            let t = d.bounce_time(&s, 10.0).unwrap().unwrap();
            assert!((t - (1.0 + 1.2f64.sqrt())).abs() < 1e-12);
            assert!(d.inertia_at(t, &s).unwrap().abs() <= 1e-10);
        }
        let harmonic = HarmonicFlow::standard(2);
        let same = BouncyDynamics::new(&harmonic, &g);
        let s = AugmentedState::new(vec![1.0, 0.0], vec![0.3, 2.0], 0.01);
        assert_eq!(same.bounce_time(&s, 50.0).unwrap(), None);
    }

    #[test]
    fn simulate_without_bounce() {
        let g = GaussianTarget::isotropic(2);
        let d = BouncyDynamics::new(&LinearFlow, &g);
        let s = AugmentedState::new(vec![1.0, 0.0], vec![1.0, 0.0], 1.5);
        let tr = d.simulate(0.5, &s).unwrap();
        assert!(max_abs_diff(&tr.state.x, &[1.5, 0.0]) < 1e-15);
        assert_eq!(tr.state.v, vec![1.0, 0.0]);
        assert!((tr.state.p - 0.875).abs() < 1e-14);
        assert_eq!(tr.counts.total(), 0);
    }

    #[test]
    fn simulate_with_one_bounce() {
        let g = GaussianTarget::isotropic(2);
        let d = BouncyDynamics::new(&LinearFlow, &g).recording(true);
        let s = AugmentedState::new(vec![1.0, 0.0], vec![1.0, 0.0], 1.5);
        let tr = d.simulate(2.0, &s).unwrap();
        assert_eq!(tr.counts.bounces, 1);
        assert!((tr.events[0].time - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(&tr.events[0].gradient_at_event, &[2.0, 0.0]) < 1e-12);
        assert!(max_abs_diff(&tr.state.x, &[1.0, 0.0]) < 1e-12);
        assert!(max_abs_diff(&tr.state.v, &[-1.0, 0.0]) < 1e-12);
        assert!((tr.state.p - 1.5).abs() < 1e-12);
        assert_eq!(tr.events.last().unwrap().kind, EventKind::End);
    }

    #[test]
    fn surrogate_equal_to_target_is_plain_flow() {
        let g = GaussianTarget::isotropic(2);
        let harmonic = HarmonicFlow::standard(2);
        let d = BouncyDynamics::new(&harmonic, &g);
        let s = AugmentedState::new(vec![0.4, -1.0], vec![1.2, 0.3], 0.2);
        let tr = d.simulate(2.5, &s).unwrap();
        let (x, v) = harmonic.flow(2.5, &s.x, &s.v);
        assert!(max_abs_diff(&tr.state.x, &x) < 1e-14);
        assert!(max_abs_diff(&tr.state.v, &v) < 1e-14);
        assert!((tr.state.p - 0.2).abs() < 1e-12);
        assert_eq!(tr.counts.total(), 0);
    }

    #[test]
    fn zero_inertia_climbing_start_bounces_immediately() {
        let g = GaussianTarget::isotropic(1);
        let d = BouncyDynamics::new(&LinearFlow, &g).recording(true);
        let tr = d.simulate(1.0, &AugmentedState::new(vec![1.0], vec![1.0], 0.0)).unwrap();
        assert_eq!(tr.events[0].time, 0.0);
        assert_eq!(tr.events[0].kind, EventKind::Bounce);
        // moves downhill afterwards: x = 0 at t = 1 with p = 1/2
        assert!(tr.state.x[0].abs() < 1e-14);
        assert!((tr.state.p - 0.5).abs() < 1e-14);
    }

    #[test]
    fn quarter_period_sample_returns_drawn_velocity() {
        let g = GaussianTarget::isotropic(3);
        let harmonic = HarmonicFlow::standard(3);
        let sampler = BouncySampler::new(BouncyDynamics::new(&harmonic, &g), FRAC_PI_2);
        let chain = sampler.sample(1, &[0.0; 3], 99).unwrap();
        let mut rng = chain_rng(99, 0);
        let v = draw_velocity(&mut rng, 3);
        assert!(max_abs_diff(chain.row(0), &v) < 1e-14);
    }

    #[test]
    fn sample_rejects_zero_iterations() {
        let g = GaussianTarget::isotropic(1);
        let sampler = BouncySampler::new(BouncyDynamics::new(&LinearFlow, &g), 1.0);
        assert!(matches!(sampler.sample(0, &[0.0], 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn event_storm_is_reported() {
        let g = GaussianTarget::isotropic(1);
        let cfg = SolverConfig {
            max_events: 3,
            ..Default::default()
        };
        let d = BouncyDynamics::new(&LinearFlow, &g).with_solver(&cfg);
        let err = d.simulate(100.0, &AugmentedState::new(vec![0.5], vec![1.0], 0.1)).unwrap_err();
        assert_eq!(err, Error::EventStorm { limit: 3 });
    }
}
