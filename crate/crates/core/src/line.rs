//! One-dimensional restrictions `t -> f(t)` along a trajectory segment.
//!
//! The bounce solvers only ever see a scalar function of trajectory time
//! together with its derivatives; targets and flows produce these.

/// Value and the first two derivatives of a line function at one time.
///
/// `curvature` is `NaN` when the producer has no closed form for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

pub trait LineFn {
    fn point(&self, t: f64) -> LinePoint;

    fn value(&self, t: f64) -> f64 {
        self.point(t).value
    }

    fn slope(&self, t: f64) -> f64 {
        self.point(t).slope
    }

    /// Whether `point` returns a finite curvature.
    fn has_curvature(&self) -> bool {
        false
    }
}

/// `t -> inner(t) - inner(0)`, the increment of a line function.
pub struct Increment<L> {
    inner: L,
    base: f64,
}

impl<L: LineFn> Increment<L> {
    pub fn new(inner: L) -> Self {
        let base = inner.value(0.0);
        Self { inner, base }
    }
}

impl<L: LineFn> LineFn for Increment<L> {
    fn point(&self, t: f64) -> LinePoint {
        let p = self.inner.point(t);
        LinePoint {
            value: p.value - self.base,
            ..p
        }
    }

    fn value(&self, t: f64) -> f64 {
        self.inner.value(t) - self.base
    }

    fn slope(&self, t: f64) -> f64 {
        self.inner.slope(t)
    }

    fn has_curvature(&self) -> bool {
        self.inner.has_curvature()
    }
}

impl<L: LineFn + ?Sized> LineFn for Box<L> {
    fn point(&self, t: f64) -> LinePoint {
        (**self).point(t)
    }
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn slope(&self, t: f64) -> f64 {
        (**self).slope(t)
    }
    fn has_curvature(&self) -> bool {
        (**self).has_curvature()
    }
}

impl<L: LineFn + ?Sized> LineFn for &L {
    fn point(&self, t: f64) -> LinePoint {
        (**self).point(t)
    }
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn slope(&self, t: f64) -> f64 {
        (**self).slope(t)
    }
    fn has_curvature(&self) -> bool {
        (**self).has_curvature()
    }
}

/// Quadratic `a + b t + c t^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LineFn for QuadraticLine {
    fn point(&self, t: f64) -> LinePoint {
        LinePoint {
            value: self.a + t * (self.b + 0.5 * self.c * t),
            slope: self.b + self.c * t,
            curvature: self.c,
        }
    }
    fn has_curvature(&self) -> bool {
        true
    }
}
