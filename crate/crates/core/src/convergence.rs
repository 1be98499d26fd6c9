//! Refreshment limit of bouncy dynamics, checked by coupling.
//!
//! The bouncy path gets a fresh inertia `E_n` at every multiple of `dt`. The
//! coupled BPS path restarts its event clock at the same instants and uses
//! the same `E_n` for its first event in each interval; further events in an
//! interval use independent draws keyed on `(interval, ordinal)`. Both paths
//! share the flow, so they agree until one of them takes an event the other
//! does not, which becomes rarer as `dt` shrinks.

use rayon::prelude::*;

use crate::bps::pdmp_event_time;
use crate::chain::EventCounts;
use crate::dynamics::{reflect, AugmentedState, BounceMethod, BouncyDynamics, EventKind};
use crate::error::{Error, Result};
use crate::rng::{draw_exp, draw_velocity, keyed_rng};
use crate::roots::SolverConfig;
use crate::surrogates::SurrogateFlow;
use crate::targets::Target;
use crate::vecops::{max_abs_diff, norm};

const SHARED_STREAM: u64 = 1;
const EXTRA_STREAM: u64 = 2;
const START_STREAM: u64 = 3;

/// `E_n`: the inertia of interval `n`, also the first BPS level there.
pub fn shared_exp(seed: u64, n: usize) -> f64 {
    draw_exp(&mut keyed_rng(seed, &[SHARED_STREAM, n as u64]))
}

/// Level of the `k`-th (k >= 1) BPS event inside interval `n`.
pub fn extra_exp(seed: u64, n: usize, k: usize) -> f64 {
    draw_exp(&mut keyed_rng(seed, &[EXTRA_STREAM, n as u64, k as u64]))
}

/// State right after a path event (or at a refresh instant).
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub time: f64,
    pub kind: EventKind,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Starts with the initial state at time 0 (kind `Refresh`).
    pub knots: Vec<Knot>,
    pub counts: EventCounts,
}

impl Path {
    fn new(x0: &[f64], v0: &[f64]) -> Self {
        Self {
            knots: vec![Knot {
                time: 0.0,
                kind: EventKind::Refresh,
                x: x0.to_vec(),
                v: v0.to_vec(),
            }],
            counts: EventCounts::default(),
        }
    }

    fn push(&mut self, time: f64, kind: EventKind, x: &[f64], v: &[f64]) {
        self.knots.push(Knot {
            time,
            kind,
            x: x.to_vec(),
            v: v.to_vec(),
        });
    }

    /// Velocity-changing events only.
    pub fn bounces(&self) -> impl Iterator<Item = &Knot> {
        self.knots.iter().filter(|k| k.kind == EventKind::Bounce)
    }

    /// Position at time `t` (within the simulated window).
    pub fn position(&self, flow: &dyn SurrogateFlow, t: f64) -> Vec<f64> {
        let i = self.knots.partition_point(|k| k.time <= t).max(1) - 1;
        let k = &self.knots[i];
        if t == k.time {
            return k.x.clone();
        }
        flow.flow(t - k.time, &k.x, &k.v).0
    }

    pub fn end(&self) -> &Knot {
        self.knots.last().expect("path has a start knot")
    }
}

fn check_window(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0) || !(horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("dt and horizon must be positive, got {dt} and {horizon}")));
    }
    Ok(())
}

fn interval_count(dt: f64, horizon: f64) -> usize {
    // tolerate dt dividing the horizon up to rounding
    ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Bouncy path with inertia reset to `inertia(n)` at each `n dt`.
pub fn refreshed_simulate(
    dt: f64,
    horizon: f64,
    x0: &[f64],
    v0: &[f64],
    mut inertia: impl FnMut(usize) -> f64,
    flow: &dyn SurrogateFlow,
    target: &dyn Target,
    solver: &SolverConfig,
) -> Result<Path> {
    check_window(dt, horizon)?;
    let dynamics = BouncyDynamics::new(flow, target)
        .with_solver(solver)
        .with_method(BounceMethod::Exact)
        .recording(true);
    let mut path = Path::new(x0, v0);
    let mut state = AugmentedState::new(x0.to_vec(), v0.to_vec(), 0.0);
    for n in 0..interval_count(dt, horizon) {
        let t0 = n as f64 * dt;
        let len = dt.min(horizon - t0);
        state.p = inertia(n);
        if n > 0 {
            path.push(t0, EventKind::Refresh, &state.x, &state.v);
        }
        // replay the events to record post-event states
        let tr = dynamics.simulate(len, &state)?;
        let mut replay = state.clone();
        let mut last = 0.0;
        for e in tr.events.iter().filter(|e| e.kind == EventKind::Bounce) {
            flow.advance(e.time - last, &mut replay.x, &mut replay.v);
            replay.v = reflect(&replay.v, &e.gradient_at_event)?;
            last = e.time;
            path.push(t0 + e.time, EventKind::Bounce, &replay.x, &replay.v);
        }
        path.counts += tr.counts;
        state = tr.state;
    }
    path.push(horizon, EventKind::End, &state.x, &state.v);
    Ok(path)
}

/// BPS path (or its analogue along a nonlinear flow) with the per-interval
/// clock restart of the coupling.
pub fn coupled_bps(dt: f64, horizon: f64, x0: &[f64], v0: &[f64], seed: u64, flow: &dyn SurrogateFlow, target: &dyn Target, solver: &SolverConfig) -> Result<Path> {
    check_window(dt, horizon)?;
    let dynamics = BouncyDynamics::new(flow, target);
    let mut path = Path::new(x0, v0);
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    for n in 0..interval_count(dt, horizon) {
        let t0 = n as f64 * dt;
        let end = t0 + dt.min(horizon - t0);
        if n > 0 {
            path.push(t0, EventKind::Refresh, &x, &v);
        }
        let mut t = t0;
        let mut k = 0;
        loop {
            let level = if k == 0 { shared_exp(seed, n) } else { extra_exp(seed, n, k) };
            let left = end - t;
            match pdmp_event_time(flow, target, &x, &v, level, left, solver)? {
                Some(s) => {
                    flow.advance(s, &mut x, &mut v);
                    v = reflect(&v, &dynamics.discrepancy_gradient(&x))?;
                    t += s;
                    k += 1;
                    path.counts.bounces += 1;
                    path.push(t, EventKind::Bounce, &x, &v);
                    if path.counts.total() > solver.max_events {
                        return Err(Error::EventStorm { limit: solver.max_events });
                    }
                }
                None => {
                    flow.advance(left, &mut x, &mut v);
                    break;
                }
            }
        }
    }
    path.push(horizon, EventKind::End, &x, &v);
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOptions {
    pub match_tol: f64,
    /// Extra evenly spaced comparison points on top of the event times.
    pub grid_points: usize,
    pub solver: SolverConfig,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            match_tol: 1e-9,
            grid_points: 1000,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun {
    pub delta_t: f64,
    pub horizon: f64,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    /// Largest position gap over event times, interval ends and the grid.
    pub sup_distance: f64,
    pub bouncy_events: usize,
    pub bps_events: usize,
}

/// Both coupled paths from `(x0, v0)` and their comparison.
pub fn coupled_pair(
    dt: f64,
    horizon: f64,
    x0: &[f64],
    v0: &[f64],
    seed: u64,
    flow: &dyn SurrogateFlow,
    target: &dyn Target,
    options: &CouplingOptions,
) -> Result<CouplingRun> {
    let bouncy = refreshed_simulate(dt, horizon, x0, v0, |n| shared_exp(seed, n), flow, target, &options.solver)?;
    let bps = coupled_bps(dt, horizon, x0, v0, seed, flow, target, &options.solver)?;
    Ok(compare(dt, horizon, &bouncy, &bps, flow, options))
}

fn compare(dt: f64, horizon: f64, a: &Path, b: &Path, flow: &dyn SurrogateFlow, options: &CouplingOptions) -> CouplingRun {
    let tol = options.match_tol;
    // first event at which the sequences disagree
    let mut mismatch = None;
    let (ea, eb): (Vec<_>, Vec<_>) = (a.bounces().collect(), b.bounces().collect());
    for i in 0..ea.len().max(eb.len()) {
        match (ea.get(i), eb.get(i)) {
            (Some(p), Some(q)) if (p.time - q.time).abs() <= tol && max_abs_diff(&p.v, &q.v) <= tol => {}
            (p, q) => {
                mismatch = Some(p.map_or(f64::INFINITY, |k| k.time).min(q.map_or(f64::INFINITY, |k| k.time)));
                break;
            }
        }
    }
    let mut times: Vec<f64> = a.knots.iter().chain(&b.knots).map(|k| k.time).collect();
    let m = options.grid_points.max(1);
    times.extend((0..=m).map(|i| horizon * i as f64 / m as f64));
    times.sort_by(f64::total_cmp);
    let mut sup: f64 = 0.0;
    let mut first_gap = None;
    for &t in &times {
        let gap = norm(&crate::vecops::sub(&a.position(flow, t), &b.position(flow, t)));
        if gap > tol && first_gap.is_none() {
            first_gap = Some(t);
        }
        sup = sup.max(gap);
    }
    let diverged = sup > tol;
    CouplingRun {
        delta_t: dt,
        horizon,
        diverged,
        divergence_time: if diverged { mismatch.or(first_gap) } else { None },
        sup_distance: sup,
        bouncy_events: a.counts.bounces,
        bps_events: b.counts.bounces,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurveRow {
    pub delta_t: f64,
    pub frequency: f64,
    pub std_error: f64,
    pub replications: usize,
}

/// Replication `r` starts from `x0, v0 ~ N(0, I)` drawn from a stream keyed
/// on `(seed, r)`; the same starts and shared draws are reused for every
/// `dt`, so the grid is compared under common random numbers.
pub fn divergence_curve(
    dt_grid: &[f64],
    replications: usize,
    horizon: f64,
    flow: &dyn SurrogateFlow,
    target: &dyn Target,
    seed: u64,
    options: &CouplingOptions,
) -> Result<Vec<CurveRow>> {
    if replications < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 replications, got {replications}")));
    }
    if dt_grid.is_empty() {
        return Err(Error::InvalidInput("dt grid is empty".into()));
    }
    let d = target.dim();
    dt_grid
        .iter()
        .map(|&dt| {
            let hits = (0..replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = keyed_rng(seed, &[START_STREAM, r as u64]);
                    let x0 = draw_velocity(&mut rng, d);
                    let v0 = draw_velocity(&mut rng, d);
                    let rep_seed = crate::rng::mix(seed, r as u64);
                    coupled_pair(dt, horizon, &x0, &v0, rep_seed, flow, target, options).map(|run| usize::from(run.diverged))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum::<usize>();
            let f = hits as f64 / replications as f64;
            Ok(CurveRow {
                delta_t: dt,
                frequency: f,
                std_error: (f * (1.0 - f) / replications as f64).sqrt(),
                replications,
            })
        })
        .collect()
}

/// Least-squares slope of `log frequency` on `log dt`; rows with zero
/// frequency are skipped.
pub fn loglog_slope(rows: &[CurveRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.frequency > 0.0).map(|r| (r.delta_t.ln(), r.frequency.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Frequencies fall as `dt` shrinks, allowing `z` standard errors of noise.
pub fn is_monotone(rows: &[CurveRow], z: f64) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| b.delta_t.total_cmp(&a.delta_t));
    sorted.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].frequency <= w[0].frequency + z * se
    })
}
