use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dim, Target};
use crate::error::{Error, Result};
use crate::line::{LineFn, LinePoint};

/// `log(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bayesian logistic regression on the preconditioned coefficient scale.
///
/// `U(b) = sum_i [log(1 + exp(x_i'b)) - y_i x_i'b] + b'b / (2 s^2)` where the
/// design columns have already been multiplied by the per-coefficient scales.
#[derive(Debug, Clone)]
pub struct LogisticRegressionTarget {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    design: Vec<f64>,
    labels: Vec<f64>,
    prior_scale: f64,
    inv_prior_var: f64,
}

impl LogisticRegressionTarget {
    /// `design` is row-major `labels.len() x dim`. `prior_scale` may be
    /// infinite (flat prior; the target is then only convex, not strictly).
    pub fn new(design: Vec<f64>, labels: Vec<f64>, dim: usize, prior_scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("logistic target needs dimension >= 1".into()));
        }
        let rows = labels.len();
        if design.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                got: design.len(),
            });
        }
        if labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if design.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("design entries must be finite".into()));
        }
        if !(prior_scale > 0.0) {
            return Err(Error::InvalidInput(format!("prior_scale must be positive, got {prior_scale}")));
        }
        let inv_prior_var = if prior_scale.is_infinite() { 0.0 } else { 1.0 / (prior_scale * prior_scale) };
        Ok(Self {
            rows,
            cols: dim,
            design,
            labels,
            prior_scale,
            inv_prior_var,
        })
    }

    /// Multiplies column `j` of the design by `scales[j]` (the `tau * lambda_j`
    /// global-local scale), so the coefficients live on the preconditioned scale.
    pub fn with_column_scales(mut self, scales: &[f64]) -> Result<Self> {
        check_dim(self.cols, scales.len())?;
        for r in 0..self.rows {
            for (a, s) in self.design[r * self.cols..(r + 1) * self.cols].iter_mut().zip(scales) {
                *a *= s;
            }
        }
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.cols..(i + 1) * self.cols]
    }

    fn linear_predictor(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Target for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.cols
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let lik: f64 = self
            .linear_predictor(x)
            .iter()
            .zip(&self.labels)
            .map(|(z, y)| softplus(*z) - y * z)
            .sum();
        lik + 0.5 * self.inv_prior_var * x.iter().map(|a| a * a).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.inv_prior_var * xi;
        }
        for (i, z) in self.linear_predictor(x).into_iter().enumerate() {
            let r = sigmoid(z) - self.labels[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += r * a;
            }
        }
    }

    fn line<'a>(&'a self, x: &[f64], v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        check_dim(self.cols, x.len()).ok()?;
        let z = self.linear_predictor(x);
        let w = self.linear_predictor(v);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        Some(Box::new(LogisticLine {
            z,
            w,
            labels: &self.labels,
            xx: dot(x, x),
            xv: dot(x, v),
            vv: dot(v, v),
            inv_prior_var: self.inv_prior_var,
        }))
    }

    fn is_log_concave(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "logistic"
    }
}

struct LogisticLine<'a> {
    z: Vec<f64>,
    w: Vec<f64>,
    labels: &'a [f64],
    xx: f64,
    xv: f64,
    vv: f64,
    inv_prior_var: f64,
}

impl LineFn for LogisticLine<'_> {
    fn point(&self, t: f64) -> LinePoint {
        let mut value = 0.0;
        let mut slope = 0.0;
        let mut curvature = 0.0;
        for ((z, w), y) in self.z.iter().zip(&self.w).zip(self.labels) {
            let u = z + t * w;
            let s = sigmoid(u);
            value += softplus(u) - y * u;
            slope += w * (s - y);
            curvature += w * w * s * (1.0 - s);
        }
        let k = self.inv_prior_var;
        LinePoint {
            value: value + 0.5 * k * (self.xx + t * (2.0 * self.xv + t * self.vv)),
            slope: slope + k * (self.xv + t * self.vv),
            curvature: curvature + k * self.vv,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let lik: f64 = self
            .z
            .iter()
            .zip(&self.w)
            .zip(self.labels)
            .map(|((z, w), y)| {
                let u = z + t * w;
                softplus(u) - y * u
            })
            .sum();
        lik + 0.5 * self.inv_prior_var * (self.xx + t * (2.0 * self.xv + t * self.vv))
    }

    fn has_curvature(&self) -> bool {
        true
    }
}

/// A synthetic sparse logistic-regression problem with a `+-1` design.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    pub design: Vec<f64>,
    pub labels: Vec<f64>,
    pub dim: usize,
    pub true_coefficients: Vec<f64>,
}

impl SyntheticLogistic {
    pub fn target(&self, prior_scale: f64) -> Result<LogisticRegressionTarget> {
        LogisticRegressionTarget::new(self.design.clone(), self.labels.clone(), self.dim, prior_scale)
    }
}

/// Draws a `rows x dim` design with independent `+-1` entries, a coefficient
/// vector with `nonzero` entries of magnitude `signal` (random signs) and
/// Bernoulli labels through the logistic link.
pub fn synthetic_sparse_logistic(rows: usize, dim: usize, nonzero: usize, signal: f64, seed: u64) -> Result<SyntheticLogistic> {
    if rows == 0 || dim == 0 || nonzero > dim {
        return Err(Error::InvalidInput("need rows >= 1, dim >= 1 and nonzero <= dim".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design: Vec<f64> = (0..rows * dim)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut beta = vec![0.0; dim];
    // spread the active coefficients evenly over the index range
    for k in 0..nonzero {
        let j = k * dim / nonzero;
        beta[j] = if rng.random_bool(0.5) { signal } else { -signal };
    }
    let labels = (0..rows)
        .map(|i| {
            let z: f64 = design[i * dim..(i + 1) * dim].iter().zip(&beta).map(|(a, b)| a * b).sum();
            if rng.random_bool(sigmoid(z)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(SyntheticLogistic {
        design,
        labels,
        dim,
        true_coefficients: beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::line_potential;
    use crate::targets::testing::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn single_row_flat_prior_line() {
        let x0 = 0.3;
        let t = LogisticRegressionTarget::new(vec![1.0], vec![1.0], 1, f64::INFINITY).unwrap();
        let line = line_potential(&t, &[x0], &[1.0]).unwrap();
        for s in [-1.0, 0.0, 0.7, 2.5] {
            let expected = (1.0 + (x0 + s as f64).exp()).ln() - (x0 + s);
            assert!((line.value(s) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_lines_and_convexity() {
        let data = synthetic_sparse_logistic(40, 5, 2, 1.0, 9).unwrap();
        let t = data.target(1.0).unwrap();
        assert_gradient_matches(&t, 100, 11);
        assert_line_consistent(&t, 12);
        assert_convex_along_lines(&t, 13);
    }

    #[test]
    fn column_scales_match_rescaled_coefficients() {
        let data = synthetic_sparse_logistic(10, 3, 1, 1.0, 2).unwrap();
        let flat = LogisticRegressionTarget::new(data.design.clone(), data.labels.clone(), 3, f64::INFINITY).unwrap();
        let scaled = flat.clone().with_column_scales(&[2.0, 0.5, 1.0]).unwrap();
        let b = [0.3, -0.4, 0.9];
        let beta = [0.6, -0.2, 0.9];
        assert!((scaled.potential(&b) - flat.potential(&beta)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_design_is_sign_valued() {
        let data = synthetic_sparse_logistic(500, 50, 5, 1.0, 1).unwrap();
        assert!(data.design.iter().all(|a| a.abs() == 1.0));
        assert_eq!(data.true_coefficients.iter().filter(|b| **b != 0.0).count(), 5);
        assert!(data.labels.iter().any(|y| *y == 1.0) && data.labels.iter().any(|y| *y == 0.0));
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(LogisticRegressionTarget::new(vec![1.0], vec![2.0], 1, 1.0).is_err());
    }
}
