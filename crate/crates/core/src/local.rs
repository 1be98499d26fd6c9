//! Local bouncy dynamics over a factorized target.
//!
//! Each factor owns a block of coordinates and an inertia. Along the flow a
//! factor's inertia is drained by `int v_S' grad_S U_d ds`, the work done by
//! its own block of the gradient; when it runs out only that block of the
//! velocity is reflected. Because the blocks partition the coordinates the
//! drains sum to the change of `U_d`, so `U_tar + |v|^2/2 + sum_f p_f` is
//! conserved. Singleton blocks with a flat surrogate give the Hamiltonian
//! zig-zag.

use std::fmt::Debug;
use std::time::Instant;

use rand::Rng;

use crate::chain::{Chain, EventCounts};
use crate::dynamics::{reflect, AugmentedState, BounceMethod, BouncyDynamics, EventKind, EventRecord};
use crate::error::{Error, Result};
use crate::line::{LineFn, LinePoint};
use crate::rng::{chain_rng, draw_exp, draw_velocity};
use crate::roots::{scan_first_root, SolverConfig};
use crate::surrogates::SurrogateFlow;
use crate::targets::{GaussianTarget, Target};
use crate::vecops::{dot, norm, norm_sq};

/// One term of the factorization.
pub trait Factor: Send + Sync + Debug {
    /// Sorted coordinates the factor acts on.
    fn indices(&self) -> &[usize];

    /// Factor gradient of `U_d` at `x`, written in full length with zeros
    /// off the factor's coordinates.
    fn gradient(&self, flow: &dyn SurrogateFlow, x: &[f64], out: &mut [f64]);

    /// Inertia drained after flowing for `t` from `(x, v)`.
    fn depletion<'a>(&'a self, flow: &'a dyn SurrogateFlow, x: &[f64], v: &[f64]) -> Result<Box<dyn LineFn + 'a>>;

    /// First `t` in `(0, horizon]` at which the depletion reaches `p`.
    fn passage(&self, flow: &dyn SurrogateFlow, h: &dyn LineFn, x: &[f64], v: &[f64], p: f64, horizon: f64, solver: &SolverConfig) -> Result<Option<f64>> {
        let mut g = vec![0.0; x.len()];
        self.gradient(flow, x, &mut g);
        scan_first_root(h, p, horizon, solver.scan_step_for(horizon, norm(&g), norm(v)), solver)
    }
}

/// `v - 2 (v'g / |g|^2) g` with `g` supported on one factor's coordinates.
pub fn restricted_reflect(v: &[f64], grad_f: &[f64]) -> Result<Vec<f64>> {
    reflect(v, grad_f)
}

/// The whole target as a single factor.
#[derive(Debug, Clone)]
pub struct GlobalFactor<'a> {
    target: &'a dyn Target,
    indices: Vec<usize>,
}

impl<'a> GlobalFactor<'a> {
    pub fn new(target: &'a dyn Target) -> Self {
        Self {
            target,
            indices: (0..target.dim()).collect(),
        }
    }
}

impl Factor for GlobalFactor<'_> {
    fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn gradient(&self, flow: &dyn SurrogateFlow, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&BouncyDynamics::new(flow, self.target).discrepancy_gradient(x));
    }

    fn depletion<'a>(&'a self, flow: &'a dyn SurrogateFlow, x: &[f64], v: &[f64]) -> Result<Box<dyn LineFn + 'a>> {
        Ok(BouncyDynamics::new(flow, self.target).depletion_line(x, v))
    }

    fn passage(&self, flow: &dyn SurrogateFlow, h: &dyn LineFn, x: &[f64], v: &[f64], p: f64, horizon: f64, solver: &SolverConfig) -> Result<Option<f64>> {
        BouncyDynamics::new(flow, self.target)
            .with_solver(solver)
            .with_method(BounceMethod::Exact)
            .solve_depletion(h, p, horizon, x, v)
    }
}

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
const PANEL: f64 = 0.25;

/// The gradient of the target restricted to a block of coordinates.
#[derive(Debug, Clone)]
pub struct ProjectedFactor<'a> {
    target: &'a dyn Target,
    gaussian: Option<&'a GaussianTarget>,
    indices: Vec<usize>,
}

impl<'a> ProjectedFactor<'a> {
    pub fn new(target: &'a dyn Target, indices: Vec<usize>) -> Result<Self> {
        check_indices(&indices, target.dim())?;
        Ok(Self {
            target,
            gaussian: None,
            indices,
        })
    }

    /// Gaussian block with closed-form depletion for the linear flow.
    pub fn gaussian(target: &'a GaussianTarget, indices: Vec<usize>) -> Result<Self> {
        check_indices(&indices, target.dim())?;
        Ok(Self {
            target,
            gaussian: Some(target),
            indices,
        })
    }

    /// `alpha`, `beta` with depletion `alpha t + beta t^2 / 2` along a line.
    fn quadratic(&self, g: &GaussianTarget, x: &[f64], v: &[f64]) -> (f64, f64) {
        let mut alpha = 0.0;
        let mut beta = 0.0;
        for &i in &self.indices {
            let row = g.precision_row(i);
            let a: f64 = row.iter().zip(x).zip(g.mean()).map(|((l, xj), mj)| l * (xj - mj)).sum();
            let b = dot(row, v);
            alpha += v[i] * a;
            beta += v[i] * b;
        }
        (alpha, beta)
    }

    fn projected_slope(&self, flow: &dyn SurrogateFlow, x: &[f64], v: &[f64]) -> f64 {
        let g = BouncyDynamics::new(flow, self.target).discrepancy_gradient(x);
        self.indices.iter().map(|&i| v[i] * g[i]).sum()
    }
}

fn check_indices(indices: &[usize], dim: usize) -> Result<()> {
    if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= dim) {
        return Err(Error::InvalidInput(format!("factor indices must be sorted, distinct and below {dim}: {indices:?}")));
    }
    Ok(())
}

impl Factor for ProjectedFactor<'_> {
    fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn gradient(&self, flow: &dyn SurrogateFlow, x: &[f64], out: &mut [f64]) {
        let g = BouncyDynamics::new(flow, self.target).discrepancy_gradient(x);
        out.fill(0.0);
        for &i in &self.indices {
            out[i] = g[i];
        }
    }

    fn depletion<'a>(&'a self, flow: &'a dyn SurrogateFlow, x: &[f64], v: &[f64]) -> Result<Box<dyn LineFn + 'a>> {
        if let (Some(g), true) = (self.gaussian, flow.is_linear()) {
            let (alpha, beta) = self.quadratic(g, x, v);
            return Ok(Box::new(crate::line::QuadraticLine { a: 0.0, b: alpha, c: beta }));
        }
        Ok(Box::new(Quadrature {
            factor: self,
            flow,
            x: x.to_vec(),
            v: v.to_vec(),
        }))
    }

    fn passage(&self, flow: &dyn SurrogateFlow, h: &dyn LineFn, x: &[f64], v: &[f64], p: f64, horizon: f64, solver: &SolverConfig) -> Result<Option<f64>> {
        if let (Some(g), true) = (self.gaussian, flow.is_linear()) {
            let (alpha, beta) = self.quadratic(g, x, v);
            return quadratic_passage(alpha, beta, p, horizon);
        }
        let mut grad = vec![0.0; x.len()];
        self.gradient(flow, x, &mut grad);
        scan_first_root(h, p, horizon, solver.scan_step_for(horizon, norm(&grad), norm(v)), solver)
    }
}

/// Depletion as a Gauss-Legendre integral of the factor's drain rate.
struct Quadrature<'a> {
    factor: &'a ProjectedFactor<'a>,
    flow: &'a dyn SurrogateFlow,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Quadrature<'_> {
    fn rate(&self, s: f64) -> f64 {
        let (xs, vs) = self.flow.flow(s, &self.x, &self.v);
        self.factor.projected_slope(self.flow, &xs, &vs)
    }
}

impl LineFn for Quadrature<'_> {
    fn point(&self, t: f64) -> LinePoint {
        LinePoint {
            value: self.value(t),
            slope: self.rate(t),
            curvature: f64::NAN,
        }
    }

    fn value(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let panels = (t.abs() / PANEL).ceil().max(1.0) as usize;
        let w = t / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * w;
            for (node, weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                let off = 0.5 * w * node;
                total += weight * (self.rate(mid - off) + self.rate(mid + off));
            }
        }
        0.5 * w * total
    }

    fn slope(&self, t: f64) -> f64 {
        self.rate(t)
    }
}

/// First `t` in `(0, horizon]` with `alpha t + beta t^2 / 2 = p`.
pub fn quadratic_passage(alpha: f64, beta: f64, p: f64, horizon: f64) -> Result<Option<f64>> {
    if p == 0.0 {
        if alpha > 0.0 {
            return Err(Error::DegenerateStart);
        }
        let t = if alpha < 0.0 && beta > 0.0 { -2.0 * alpha / beta } else { f64::INFINITY };
        return Ok(Some(t).filter(|t| *t <= horizon));
    }
    let t = if beta == 0.0 {
        if alpha > 0.0 {
            p / alpha
        } else {
            f64::INFINITY
        }
    } else {
        let disc = alpha * alpha + 2.0 * beta * p;
        if disc < 0.0 {
            f64::INFINITY
        } else {
            let q = -0.5 * (alpha + alpha.signum() * disc.sqrt());
            let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
            let r1 = q / (0.5 * beta);
            let r2 = -p / q;
            [r1, r2].into_iter().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min)
        }
    };
    Ok(Some(t).filter(|t| *t <= horizon))
}

/// Positions, velocity and one inertia per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub inertias: Vec<f64>,
}

impl LocalState {
    pub fn energy(&self, target: &dyn Target) -> f64 {
        target.potential(&self.x) + 0.5 * norm_sq(&self.v) + self.inertias.iter().sum::<f64>()
    }

    pub fn reversed(&self) -> Self {
        Self {
            x: self.x.clone(),
            v: self.v.iter().map(|a| -a).collect(),
            inertias: self.inertias.clone(),
        }
    }
}

impl From<AugmentedState> for LocalState {
    fn from(s: AugmentedState) -> Self {
        Self {
            x: s.x,
            v: s.v,
            inertias: vec![s.p],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrajectory {
    pub state: LocalState,
    /// `(factor, event)`; empty unless recording.
    pub events: Vec<(usize, EventRecord)>,
    pub counts: EventCounts,
}

/// Factors whose coordinate blocks partition `0..dim`.
#[derive(Debug)]
pub struct FactorSet<'a> {
    factors: Vec<Box<dyn Factor + 'a>>,
    dim: usize,
}

impl<'a> FactorSet<'a> {
    pub fn new(factors: Vec<Box<dyn Factor + 'a>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for f in &factors {
            for &i in f.indices() {
                if i >= dim || seen[i] {
                    return Err(Error::InvalidInput(format!("factor blocks must partition 0..{dim}; index {i} repeated or out of range")));
                }
                seen[i] = true;
            }
        }
        if factors.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput(format!("factor blocks must cover 0..{dim}")));
        }
        Ok(Self { factors, dim })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[Box<dyn Factor + 'a>] {
        &self.factors
    }
}

/// Singleton coordinate factors of `target`. In one dimension the single
/// coordinate factor is the target itself.
pub fn coordinate_factors(target: &dyn Target) -> Result<FactorSet<'_>> {
    let d = target.dim();
    if d == 1 {
        return FactorSet::new(vec![Box::new(GlobalFactor::new(target))], 1);
    }
    let factors = (0..d)
        .map(|i| ProjectedFactor::new(target, vec![i]).map(|f| Box::new(f) as Box<dyn Factor>))
        .collect::<Result<Vec<_>>>()?;
    FactorSet::new(factors, d)
}

/// Coordinate factors with the closed-form Gaussian depletion.
pub fn gaussian_coordinate_factors(target: &GaussianTarget) -> Result<FactorSet<'_>> {
    gaussian_block_factors(target, (0..target.dim()).map(|i| vec![i]).collect())
}

pub fn gaussian_block_factors(target: &GaussianTarget, blocks: Vec<Vec<usize>>) -> Result<FactorSet<'_>> {
    let d = target.dim();
    if blocks.len() == 1 && blocks[0].iter().copied().eq(0..d) {
        return FactorSet::new(vec![Box::new(GlobalFactor::new(target))], d);
    }
    let factors = blocks
        .into_iter()
        .map(|b| ProjectedFactor::gaussian(target, b).map(|f| Box::new(f) as Box<dyn Factor>))
        .collect::<Result<Vec<_>>>()?;
    FactorSet::new(factors, d)
}

pub fn block_factors(target: &dyn Target, blocks: Vec<Vec<usize>>) -> Result<FactorSet<'_>> {
    let d = target.dim();
    if blocks.len() == 1 && blocks[0].iter().copied().eq(0..d) {
        return FactorSet::new(vec![Box::new(GlobalFactor::new(target))], d);
    }
    let factors = blocks
        .into_iter()
        .map(|b| ProjectedFactor::new(target, b).map(|f| Box::new(f) as Box<dyn Factor>))
        .collect::<Result<Vec<_>>>()?;
    FactorSet::new(factors, d)
}

/// Runs the local dynamics for time `travel_time`.
pub fn local_simulate(
    travel_time: f64,
    start: &LocalState,
    flow: &dyn SurrogateFlow,
    factors: &FactorSet<'_>,
    solver: &SolverConfig,
    record_events: bool,
) -> Result<LocalTrajectory> {
    if !(travel_time > 0.0) || !travel_time.is_finite() {
        return Err(Error::InvalidInput(format!("travel time must be positive, got {travel_time}")));
    }
    let d = factors.dim();
    if start.x.len() != d || start.v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: start.x.len().min(start.v.len()),
        });
    }
    if start.inertias.len() != factors.len() {
        return Err(Error::DimensionMismatch {
            expected: factors.len(),
            got: start.inertias.len(),
        });
    }
    if start.inertias.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidInput("factor inertias must be >= 0".into()));
    }
    let mut x = start.x.clone();
    let mut v = start.v.clone();
    let mut p = start.inertias.clone();
    let mut counts = EventCounts::default();
    let mut events = Vec::new();
    let mut tau = 0.0;
    let mut grad = vec![0.0; d];

    while tau < travel_time {
        let remaining = travel_time - tau;
        let lines = factors
            .factors()
            .iter()
            .map(|f| f.depletion(flow, &x, &v))
            .collect::<Result<Vec<_>>>()?;

        // a factor with no inertia left that is still climbing bounces at once
        let stuck = (0..factors.len()).find(|&k| p[k] == 0.0 && lines[k].slope(0.0) > 0.0);
        if let Some(k) = stuck {
            factors.factors()[k].gradient(flow, &x, &mut grad);
            v = restricted_reflect(&v, &grad)?;
            if dot(&v, &grad) >= 0.0 {
                return Err(Error::DegenerateStart);
            }
            note(&mut events, &mut counts, record_events, solver, k, tau, &grad)?;
            continue;
        }

        let mut first: Option<(f64, usize)> = None;
        for (k, f) in factors.factors().iter().enumerate() {
            let horizon = first.map_or(remaining, |(t, _)| t);
            if let Some(t) = f.passage(flow, lines[k].as_ref(), &x, &v, p[k], horizon, solver)? {
                if first.is_none_or(|(tb, _)| t < tb) {
                    first = Some((t, k));
                }
            }
        }

        match first {
            Some((t, k)) => {
                for (j, line) in lines.iter().enumerate() {
                    if j != k {
                        p[j] = (p[j] - line.value(t)).max(0.0);
                    }
                }
                flow.advance(t, &mut x, &mut v);
                factors.factors()[k].gradient(flow, &x, &mut grad);
                v = restricted_reflect(&v, &grad)?;
                p[k] = 0.0;
                tau += t;
                note(&mut events, &mut counts, record_events, solver, k, tau, &grad)?;
            }
            None => {
                for (j, line) in lines.iter().enumerate() {
                    p[j] -= line.value(remaining);
                }
                flow.advance(remaining, &mut x, &mut v);
                for pj in &mut p {
                    *pj = pj.max(0.0);
                }
                tau = travel_time;
            }
        }
    }
    Ok(LocalTrajectory {
        state: LocalState { x, v, inertias: p },
        events,
        counts,
    })
}

fn note(events: &mut Vec<(usize, EventRecord)>, counts: &mut EventCounts, record: bool, solver: &SolverConfig, factor: usize, time: f64, grad: &[f64]) -> Result<()> {
    counts.bounces += 1;
    if counts.total() > solver.max_events {
        return Err(Error::EventStorm { limit: solver.max_events });
    }
    if record {
        events.push((
            factor,
            EventRecord {
                time,
                kind: EventKind::Bounce,
                gradient_at_event: grad.to_vec(),
            },
        ));
    }
    Ok(())
}

/// Fixed travel-time sampler over local dynamics; with coordinate factors
/// and a flat surrogate this is the Hamiltonian zig-zag sampler.
#[derive(Debug)]
pub struct LocalSampler<'a> {
    pub flow: &'a dyn SurrogateFlow,
    pub factors: FactorSet<'a>,
    pub travel_time: f64,
    pub solver: SolverConfig,
}

impl<'a> LocalSampler<'a> {
    pub fn new(flow: &'a dyn SurrogateFlow, factors: FactorSet<'a>, travel_time: f64) -> Self {
        Self {
            flow,
            factors,
            travel_time,
            solver: SolverConfig::default(),
        }
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, x0: &[f64], rng: &mut R) -> Result<Chain> {
        self.solver.validate()?;
        if n == 0 {
            return Err(Error::InvalidInput("number of iterations must be >= 1".into()));
        }
        let d = self.factors.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
        }
        let clock = Instant::now();
        let mut chain = Chain::new(d, "hbps-local");
        let mut x = x0.to_vec();
        for _ in 0..n {
            let v = draw_velocity(rng, d);
            let inertias = (0..self.factors.len()).map(|_| draw_exp(rng)).collect();
            let tr = local_simulate(self.travel_time, &LocalState { x, v, inertias }, self.flow, &self.factors, &self.solver, false)?;
            x = tr.state.x;
            chain.push(&x, tr.counts, self.travel_time);
        }
        chain.wall_seconds = clock.elapsed().as_secs_f64();
        Ok(chain)
    }

    pub fn sample(&self, n: usize, x0: &[f64], seed: u64) -> Result<Chain> {
        self.sample_with_rng(n, x0, &mut chain_rng(seed, 0))
    }
}

/// Hamiltonian zig-zag on `target`: coordinate factors, flat surrogate.
pub fn zigzag_sample(n: usize, travel_time: f64, x0: &[f64], target: &dyn Target, seed: u64) -> Result<Chain> {
    let factors = coordinate_factors(target)?;
    LocalSampler::new(&crate::surrogates::LinearFlow, factors, travel_time).sample(n, x0, seed)
}
