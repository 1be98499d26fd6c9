//! Surrogate potentials with exact solution operators.
//!
//! The surrogate dynamics is Hamiltonian with kinetic energy `|v|^2 / 2`;
//! bouncy dynamics follows it between bounces.

use std::f64::consts::TAU;
use std::fmt::Debug;

use crate::error::{Error, Result};

pub trait SurrogateFlow: Send + Sync + Debug {
    fn potential(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Advances `(x, v)` in place by time `t` (negative `t` runs backwards).
    fn advance(&self, t: f64, x: &mut [f64], v: &mut [f64]);

    /// `true` when the flow is `x + t v` with constant velocity.
    fn is_linear(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str;

    fn flow(&self, t: f64, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xt = x.to_vec();
        let mut vt = v.to_vec();
        self.advance(t, &mut xt, &mut vt);
        (xt, vt)
    }
}

/// Flat surrogate `U_* = 0`; straight-line motion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearFlow;

impl SurrogateFlow for LinearFlow {
    fn potential(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn advance(&self, t: f64, x: &mut [f64], v: &mut [f64]) {
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += t * vi;
        }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}

/// `(x + t v, v)`.
pub fn linear_flow(t: f64, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    LinearFlow.flow(t, x, v)
}

/// Isotropic quadratic surrogate `U_*(x) = w^2 |x - c|^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFlow {
    center: Vec<f64>,
    scale: f64,
}

impl HarmonicFlow {
    pub fn new(center: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("harmonic scale must be positive, got {scale}")));
        }
        Ok(Self { center, scale })
    }

    /// Unit-frequency oscillator about the origin.
    pub fn standard(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            scale: 1.0,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn period(&self) -> f64 {
        TAU / self.scale
    }
}

impl SurrogateFlow for HarmonicFlow {
    fn potential(&self, x: &[f64]) -> f64 {
        let w2 = self.scale * self.scale;
        0.5 * w2 * x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let w2 = self.scale * self.scale;
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = w2 * (a - c);
        }
    }

    fn advance(&self, t: f64, x: &mut [f64], v: &mut [f64]) {
        let w = self.scale;
        // reduce the phase modulo a full period before the trig calls
        let phase = (w * t).rem_euclid(TAU);
        let (s, c) = phase.sin_cos();
        for ((xi, vi), ci) in x.iter_mut().zip(v.iter_mut()).zip(&self.center) {
            let y = *xi - ci;
            let u = *vi;
            *xi = ci + y * c + u / w * s;
            *vi = -w * y * s + u * c;
        }
    }

    fn name(&self) -> &'static str {
        "harmonic"
    }
}

/// Closed-form harmonic solution operator.
pub fn harmonic_flow(spec: &HarmonicFlow, t: f64, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    spec.flow(t, x, v)
}

/// Kick-drift-kick leapfrog approximation of a surrogate's flow.
///
/// Uses only the surrogate gradient; `substeps` leapfrog steps are taken per
/// call regardless of `t`.
#[derive(Debug)]
pub struct LeapfrogFlow<'a> {
    inner: &'a dyn SurrogateFlow,
    substeps: usize,
}

impl<'a> LeapfrogFlow<'a> {
    pub fn new(inner: &'a dyn SurrogateFlow, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidInput("leapfrog_substeps must be >= 1".into()));
        }
        Ok(Self { inner, substeps })
    }
}

impl SurrogateFlow for LeapfrogFlow<'_> {
    fn potential(&self, x: &[f64]) -> f64 {
        self.inner.potential(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }

    fn advance(&self, t: f64, x: &mut [f64], v: &mut [f64]) {
        let h = t / self.substeps as f64;
        let mut g = vec![0.0; x.len()];
        self.inner.gradient(x, &mut g);
        for _ in 0..self.substeps {
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi -= 0.5 * h * gi;
            }
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi += h * vi;
            }
            self.inner.gradient(x, &mut g);
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi -= 0.5 * h * gi;
            }
        }
    }

    fn is_linear(&self) -> bool {
        self.inner.is_linear()
    }

    fn name(&self) -> &'static str {
        "leapfrog"
    }
}
