use super::{check_dim, GaussianTarget, Target};
use crate::error::{Error, Result};
use crate::line::LineFn;
use crate::vecops::{dot, norm};

/// Feasibility tolerance on `a'x - b`.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Half-space `{x : a'x >= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl LinearConstraint {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if !(norm(&normal) > 0.0) {
            return Err(Error::InvalidInput("constraint normal must be nonzero".into()));
        }
        Ok(Self { normal, offset })
    }

    /// `x_k >= 0` (sign `+1`) or `x_k <= 0` (sign `-1`) in `dim` dimensions.
    pub fn coordinate(dim: usize, k: usize, sign: f64) -> Self {
        let mut normal = vec![0.0; dim];
        normal[k] = sign.signum();
        Self { normal, offset: 0.0 }
    }

    /// `a'x - b`; nonnegative inside the feasible set.
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

pub fn check_feasible(constraints: &[LinearConstraint], x: &[f64]) -> Result<()> {
    for (index, c) in constraints.iter().enumerate() {
        let s = c.slack(x);
        if s < -FEASIBILITY_TOL || s.is_nan() {
            return Err(Error::Infeasible { index, violation: -s });
        }
    }
    Ok(())
}

/// Earliest `t > 0` at which the ray `x + t v` leaves through a face, with
/// the index of that face. Faces the ray moves away from are skipped.
pub fn boundary_hit(constraints: &[LinearConstraint], x: &[f64], v: &[f64]) -> Result<Option<(f64, usize)>> {
    check_feasible(constraints, x)?;
    let mut best: Option<(f64, usize)> = None;
    for (k, c) in constraints.iter().enumerate() {
        let rate = dot(&c.normal, v);
        if rate >= 0.0 {
            continue;
        }
        let t = (c.slack(x) / -rate).max(0.0);
        if best.is_none_or(|(tb, _)| t < tb) {
            best = Some((t, k));
        }
    }
    Ok(best)
}

/// Any target restricted to an intersection of half-spaces.
#[derive(Debug)]
pub struct ConstrainedTarget {
    inner: Box<dyn Target>,
    constraints: Vec<LinearConstraint>,
}

impl ConstrainedTarget {
    pub fn new(inner: Box<dyn Target>, constraints: Vec<LinearConstraint>) -> Result<Self> {
        for c in &constraints {
            check_dim(inner.dim(), c.normal.len())?;
        }
        Ok(Self { inner, constraints })
    }

    pub fn inner(&self) -> &dyn Target {
        self.inner.as_ref()
    }
}

impl Target for ConstrainedTarget {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn potential(&self, x: &[f64]) -> f64 {
        self.inner.potential(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }
    fn line<'a>(&'a self, x: &[f64], v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        self.inner.line(x, v)
    }
    fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }
    fn is_log_concave(&self) -> bool {
        self.inner.is_log_concave()
    }
    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

/// Gaussian restricted to the orthant `{sign(x) = signs}`.
#[derive(Debug, Clone)]
pub struct TruncatedGaussianTarget {
    base: GaussianTarget,
    signs: Vec<f64>,
    constraints: Vec<LinearConstraint>,
}

impl TruncatedGaussianTarget {
    pub fn new(base: GaussianTarget, signs: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), signs.len())?;
        if signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidInput("orthant signs must be +1 or -1".into()));
        }
        let constraints = signs
            .iter()
            .enumerate()
            .map(|(k, s)| LinearConstraint::coordinate(signs.len(), k, *s))
            .collect();
        Ok(Self {
            base,
            signs,
            constraints,
        })
    }

    pub fn base(&self) -> &GaussianTarget {
        &self.base
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }
}

impl Target for TruncatedGaussianTarget {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn potential(&self, x: &[f64]) -> f64 {
        self.base.potential(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient(x, out)
    }
    fn line<'a>(&'a self, x: &[f64], v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        self.base.line(x, v)
    }
    fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }
    fn is_log_concave(&self) -> bool {
        true
    }
    fn name(&self) -> &'static str {
        "truncated_gaussian"
    }
}
