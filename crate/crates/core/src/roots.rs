//! Root finding for event times along a trajectory segment.
//!
//! Every solver works on an increment line `h` with `h(0) = 0` and looks for
//! the *first* time the line reaches a level. Two strategies exist:
//!
//! * a generic scan over a grid followed by safeguarded Newton polishing,
//!   valid for any continuous `h` with a known slope;
//! * a convex fast path that needs the curvature and exploits the fact that
//!   a convex `h` crosses any level above its minimum at most once after the
//!   turning point.

use crate::error::{Error, Result};
use crate::line::{LineFn, LinePoint};

/// Tolerances shared by every bounce/event solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Absolute residual accepted on `|h(t) - level|`.
    pub newton_tol: f64,
    /// Newton budget; bisection fallbacks get an extra fixed allowance.
    pub max_newton_iters: usize,
    /// Fixed scan step; `None` selects the adaptive rule.
    pub scan_step: Option<f64>,
    /// Upper bound on events within one trajectory.
    pub max_events: usize,
    /// Curvature below `-convexity_tol` rejects the convex fast path.
    pub convexity_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 50,
            scan_step: None,
            max_events: 1_000_000,
            convexity_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || self.max_newton_iters == 0 || self.max_events == 0 {
            return Err(Error::InvalidInput(
                "solver tolerances and budgets must be positive".into(),
            ));
        }
        if let Some(s) = self.scan_step {
            if !(s > 0.0) {
                return Err(Error::InvalidInput("scan_step must be positive".into()));
            }
        }
        Ok(())
    }

    /// Scan increment for a segment of length `horizon` whose discrepancy
    /// gradient has norm `grad_norm` and whose speed is `speed`.
    pub fn scan_step_for(&self, horizon: f64, grad_norm: f64, speed: f64) -> f64 {
        match self.scan_step {
            Some(s) => s,
            None => (0.1 * horizon).min(1.0 / (1.0 + grad_norm * speed)),
        }
    }
}

const BISECTION_ALLOWANCE: usize = 200;

/// Safeguarded Newton on a bracket with `f(lo) < 0 <= f(hi)`.
///
/// `f` returns the value and derivative; a non-finite derivative forces
/// bisection. Newton steps are accepted only when they stay strictly inside
/// the bracket and shrink fast enough.
pub(crate) fn polish<F>(mut f: F, mut lo: f64, mut hi: f64, start: f64, cfg: &SolverConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(lo <= hi) {
        return Err(Error::RootBracketFailure(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut t = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    let mut dx_old = hi - lo;
    let mut dx = dx_old;
    let mut last = f64::INFINITY;
    for _ in 0..cfg.max_newton_iters + BISECTION_ALLOWANCE {
        let (fv, df) = f(t)?;
        last = fv;
        if fv == 0.0 {
            return Ok(t);
        }
        if fv < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - fv / df;
        let usable = newton.is_finite() && newton > lo && newton <= hi && (newton - t).abs() < 0.5 * dx_old.abs();
        let step = (newton - t).abs();
        if fv.abs() <= cfg.newton_tol && usable && step <= 1e-14 * t.abs().max(1.0) {
            return Ok(t);
        }
        if usable && step <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(newton);
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(1.0) {
            return Ok(if fv.abs() <= cfg.newton_tol { t } else { hi });
        }
        dx_old = dx;
        let next = if usable { newton } else { 0.5 * (lo + hi) };
        dx = next - t;
        t = next;
    }
    if last.abs() <= cfg.newton_tol {
        Ok(t)
    } else {
        Err(Error::RootBracketFailure(format!(
            "no convergence on [{lo:e}, {hi:e}], residual {last:e}"
        )))
    }
}

/// Locates a sign change of the slope on `[lo, hi]`, where the slope goes
/// from `<= 0` at `lo` to `> 0` at `hi` (`rising`) or the reverse.
fn slope_crossing(h: &dyn LineFn, lo: f64, hi: f64, rising: bool, cfg: &SolverConfig) -> Result<f64> {
    let sign = if rising { 1.0 } else { -1.0 };
    let tol_cfg = SolverConfig {
        newton_tol: 0.0,
        ..cfg.clone()
    };
    polish(
        |t| {
            let p = h.point(t);
            Ok((sign * p.slope, sign * p.curvature))
        },
        lo,
        hi,
        0.5 * (lo + hi),
        &tol_cfg,
    )
}

/// First `t` in `(0, horizon]` with `h(t) = level`, found by scanning with
/// increment `step` and polishing the first sign change.
///
/// `h(0)` must be `0`. With `level == 0` the start must be descending.
pub fn scan_first_root(h: &dyn LineFn, level: f64, horizon: f64, step: f64, cfg: &SolverConfig) -> Result<Option<f64>> {
    check_window(horizon, step)?;
    let start = h.point(0.0);
    if level <= 0.0 && start.slope > 0.0 {
        return Err(Error::DegenerateStart);
    }
    let mut t_prev = 0.0;
    let mut f_prev = -level;
    let mut slope_prev = start.slope;
    loop {
        let t = (t_prev + step).min(horizon);
        let pt = h.point(t);
        let f = pt.value - level;
        if f >= 0.0 {
            return polish_level(h, level, t_prev, f_prev, t, f, cfg).map(Some);
        }
        if slope_prev > 0.0 && pt.slope < 0.0 {
            let t_max = slope_crossing(h, t_prev, t, false, cfg)?;
            let f_max = h.value(t_max) - level;
            if f_max >= 0.0 {
                return polish_level(h, level, t_prev, f_prev, t_max, f_max, cfg).map(Some);
            }
        }
        if t >= horizon {
            return Ok(None);
        }
        t_prev = t;
        f_prev = f;
        slope_prev = pt.slope;
    }
}

fn polish_level(h: &dyn LineFn, level: f64, lo: f64, f_lo: f64, hi: f64, f_hi: f64, cfg: &SolverConfig) -> Result<f64> {
    let secant = if f_hi > f_lo { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { hi };
    polish(
        |t| {
            let p = h.point(t);
            Ok((p.value - level, p.slope))
        },
        lo,
        hi,
        secant,
        cfg,
    )
}

fn check_window(horizon: f64, step: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("scan step must be positive, got {step}")));
    }
    Ok(())
}

fn convex_point(h: &dyn LineFn, t: f64, cfg: &SolverConfig) -> Result<LinePoint> {
    let p = h.point(t);
    if !p.curvature.is_finite() {
        return Err(Error::Unsupported("line restriction lacks a curvature".into()));
    }
    if p.curvature < -cfg.convexity_tol {
        return Err(Error::NotLogConcave {
            curvature: p.curvature,
            t,
        });
    }
    Ok(p)
}

/// Where the level is measured from in [`convex_passage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Solve `h(t) = level` (inertia depletion).
    Start,
    /// Solve `h(t) - h(t_min) = level` where `t_min` is the turning point
    /// (positive-part integral of a convex rate).
    TurningPoint,
}

/// Where a convex line stops descending: `0` when it already rises at the
/// start, `None` when it is still nonincreasing at `horizon`.
pub fn turning_point(h: &dyn LineFn, horizon: f64, step: f64, cfg: &SolverConfig) -> Result<Option<f64>> {
    check_window(horizon, step)?;
    if convex_point(h, 0.0, cfg)?.slope > 0.0 {
        return Ok(Some(0.0));
    }
    if convex_point(h, horizon, cfg)?.slope <= 0.0 {
        return Ok(None);
    }
    let mut a = 0.0;
    let mut inc = step;
    let mut b = inc.min(horizon);
    while b < horizon && convex_point(h, b, cfg)?.slope <= 0.0 {
        a = b;
        inc *= 2.0;
        b = inc.min(horizon);
    }
    polish(
        |t| {
            let p = convex_point(h, t, cfg)?;
            Ok((p.slope, p.curvature))
        },
        a,
        b,
        0.5 * (a + b),
        &SolverConfig {
            newton_tol: 0.0,
            ..cfg.clone()
        },
    )
    .map(Some)
}

/// First passage of a convex increment line `h` on `(0, horizon]`.
///
/// When `h` starts descending, the turning point is bracketed by doubling
/// from `step` and polished by Newton on the slope; the level is then solved
/// on the increasing branch. Convexity guarantees the root found there is
/// the first one.
pub fn convex_passage(
    h: &dyn LineFn,
    level: f64,
    reference: Reference,
    horizon: f64,
    step: f64,
    cfg: &SolverConfig,
) -> Result<Option<f64>> {
    check_window(horizon, step)?;
    let Some(t_turn) = turning_point(h, horizon, step, cfg)? else {
        return Ok(None);
    };
    let h_turn = if t_turn == 0.0 { 0.0 } else { h.value(t_turn) };
    let target = match reference {
        Reference::Start => level,
        Reference::TurningPoint => h_turn + level,
    };
    if h_turn - target >= 0.0 {
        if t_turn == 0.0 {
            return Err(Error::DegenerateStart);
        }
        return Ok(Some(t_turn));
    }
    if h.value(horizon) - target < 0.0 {
        return Ok(None);
    }
    let mut a = t_turn;
    let mut inc = step;
    let mut b = (t_turn + inc).min(horizon);
    while b < horizon && h.value(b) - target < 0.0 {
        a = b;
        inc *= 2.0;
        b = (t_turn + inc).min(horizon);
    }
    polish(
        |t| {
            let p = convex_point(h, t, cfg)?;
            Ok((p.value - target, p.slope))
        },
        a,
        b,
        b,
        cfg,
    )
    .map(Some)
}

/// First `t` with `int_0^t [h'(s)]^+ ds = level` for an arbitrary line,
/// accumulating the increments of `h` over its ascending pieces.
pub fn scan_positive_part(h: &dyn LineFn, level: f64, horizon: f64, step: f64, cfg: &SolverConfig) -> Result<Option<f64>> {
    check_window(horizon, step)?;
    if !(level > 0.0) {
        return Err(Error::InvalidInput("event level must be positive".into()));
    }
    let mut acc = 0.0;
    let mut t_prev = 0.0;
    let mut prev = h.point(0.0);
    loop {
        let t = (t_prev + step).min(horizon);
        let pt = h.point(t);
        let mut pieces = [(t_prev, prev.value, prev.slope, t, pt.value); 2];
        let mut n = 1;
        if (prev.slope > 0.0) != (pt.slope > 0.0) {
            let tc = slope_crossing(h, t_prev, t, pt.slope > 0.0, cfg)?;
            let vc = h.value(tc);
            pieces[0] = (t_prev, prev.value, prev.slope, tc, vc);
            pieces[1] = (tc, vc, pt.slope, t, pt.value);
            n = 2;
        }
        for &(a, va, slope_hint, b, vb) in &pieces[..n] {
            let rising = if n == 2 { slope_hint > 0.0 } else { pt.slope > 0.0 || vb > va };
            if !rising || vb <= va {
                continue;
            }
            let inc = vb - va;
            if acc + inc >= level {
                let need = level - acc;
                let target = va + need;
                return polish(
                    |s| {
                        let p = h.point(s);
                        Ok((p.value - target, p.slope))
                    },
                    a,
                    b,
                    a + (b - a) * need / inc,
                    cfg,
                )
                .map(Some);
            }
            acc += inc;
        }
        if t >= horizon {
            return Ok(None);
        }
        t_prev = t;
        prev = pt;
    }
}
