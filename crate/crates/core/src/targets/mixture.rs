use std::f64::consts::PI;

use super::{check_dim, Target};
use crate::error::{Error, Result};
use crate::line::{LineFn, LinePoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Product over coordinates of one univariate Gaussian mixture. Not
/// log-concave once the component means are separated.
#[derive(Debug, Clone)]
pub struct MixtureTarget {
    components: Vec<MixtureComponent>,
    dim: usize,
    log_norms: Vec<f64>,
}

impl MixtureTarget {
    pub fn new(components: Vec<MixtureComponent>, dim: usize) -> Result<Self> {
        if components.is_empty() || dim == 0 {
            return Err(Error::InvalidInput("mixture needs at least one component and dim >= 1".into()));
        }
        if components.iter().any(|c| !(c.weight > 0.0) || !(c.variance > 0.0) || !c.mean.is_finite()) {
            return Err(Error::InvalidInput("mixture weights and variances must be positive".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let components: Vec<_> = components
            .into_iter()
            .map(|c| MixtureComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        let log_norms = components
            .iter()
            .map(|c| c.weight.ln() - 0.5 * (2.0 * PI * c.variance).ln())
            .collect();
        Ok(Self {
            components,
            dim,
            log_norms,
        })
    }

    /// Equal-weight, unit-variance mixture at `-separation` and `+separation`.
    pub fn symmetric_bimodal(separation: f64, dim: usize) -> Result<Self> {
        Self::new(
            vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: -separation,
                    variance: 1.0,
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: separation,
                    variance: 1.0,
                },
            ],
            dim,
        )
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Univariate density of one coordinate.
    pub fn density_1d(&self, x: f64) -> f64 {
        (-self.coordinate(x).0).exp()
    }

    /// Mean and variance of one coordinate.
    pub fn moments_1d(&self) -> (f64, f64) {
        let m: f64 = self.components.iter().map(|c| c.weight * c.mean).sum();
        let s: f64 = self.components.iter().map(|c| c.weight * (c.variance + c.mean * c.mean)).sum();
        (m, s - m * m)
    }

    /// `(u, u', u'')` of the univariate potential.
    fn coordinate(&self, x: f64) -> (f64, f64, f64) {
        let mut logs = [0.0f64; 8];
        let mut heap;
        let l: &mut [f64] = if self.components.len() <= logs.len() {
            &mut logs[..self.components.len()]
        } else {
            heap = vec![0.0; self.components.len()];
            &mut heap
        };
        for ((li, c), ln) in l.iter_mut().zip(&self.components).zip(&self.log_norms) {
            let r = x - c.mean;
            *li = ln - 0.5 * r * r / c.variance;
        }
        let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = l.iter().map(|li| (li - top).exp()).sum();
        let u = -(top + sum.ln());
        let mut first = 0.0;
        let mut second = 0.0;
        let mut inv_var = 0.0;
        for (li, c) in l.iter().zip(&self.components) {
            let w = (li - top).exp() / sum;
            let s = (x - c.mean) / c.variance;
            first += w * s;
            second += w * s * s;
            inv_var += w / c.variance;
        }
        (u, first, inv_var - (second - first * first))
    }
}

impl Target for MixtureTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[f64]) -> f64 {
        x.iter().map(|xi| self.coordinate(*xi).0).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.coordinate(*xi).1;
        }
    }

    fn line<'a>(&'a self, x: &[f64], v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        check_dim(self.dim, x.len()).ok()?;
        Some(Box::new(MixtureLine {
            target: self,
            x: x.to_vec(),
            v: v.to_vec(),
        }))
    }

    fn name(&self) -> &'static str {
        "mixture"
    }
}

struct MixtureLine<'a> {
    target: &'a MixtureTarget,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl LineFn for MixtureLine<'_> {
    fn point(&self, t: f64) -> LinePoint {
        let mut p = LinePoint {
            value: 0.0,
            slope: 0.0,
            curvature: 0.0,
        };
        for (xi, vi) in self.x.iter().zip(&self.v) {
            let (u, d1, d2) = self.target.coordinate(xi + t * vi);
            p.value += u;
            p.slope += vi * d1;
            p.curvature += vi * vi * d2;
        }
        p
    }

    fn has_curvature(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::testing::*;

    #[test]
    fn density_integrates_to_one() {
        let m = MixtureTarget::symmetric_bimodal(2.0, 1).unwrap();
        let (a, b, n) = (-15.0, 15.0, 30_000);
        let h = (b - a) / n as f64;
        let total: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * m.density_1d(a + i as f64 * h)
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-10);
        assert_eq!(m.moments_1d(), (0.0, 5.0));
    }

    #[test]
    fn gradients_and_lines() {
        let m = MixtureTarget::symmetric_bimodal(2.0, 2).unwrap();
        assert_gradient_matches(&m, 100, 21);
        assert_line_consistent(&m, 22);
    }

    #[test]
    fn not_convex_between_modes() {
        let m = MixtureTarget::symmetric_bimodal(2.0, 1).unwrap();
        assert!(m.coordinate(0.0).2 < 0.0);
        assert!(!m.is_log_concave());
    }
}
