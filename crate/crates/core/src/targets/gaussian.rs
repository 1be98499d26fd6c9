use nalgebra::{DMatrix, DVector};

use super::{check_dim, Target};
use crate::error::{Error, Result};
use crate::line::{LineFn, QuadraticLine};

/// Multivariate normal `N(mean, precision^-1)` with `U(x) = (x-m)' P (x-m) / 2`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    /// Lower-triangular `L` with `P = L L'`.
    precision_factor: DMatrix<f64>,
    precision: Vec<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn from_precision(mean: Vec<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidInput("gaussian target needs dimension >= 1".into()));
        }
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: precision.nrows(),
            });
        }
        let sym = (&precision + precision.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("precision matrix is not positive definite".into()))?;
        let covariance = chol.inverse();
        Ok(Self {
            mean,
            precision_factor: chol.l(),
            precision: sym.transpose().iter().copied().collect(),
            covariance,
        })
    }

    pub fn from_covariance(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance matrix is not positive definite".into()))?;
        Self::from_precision(mean, chol.inverse())
    }

    /// Standard normal in `dim` dimensions.
    pub fn isotropic(dim: usize) -> Self {
        Self::from_precision(vec![0.0; dim], DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    /// Unit-variance bivariate normal with correlation `rho`.
    pub fn correlated_2d(rho: f64) -> Result<Self> {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        Self::from_covariance(vec![0.0, 0.0], cov)
    }

    /// Independent coordinates with the given variances.
    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        let p = DMatrix::from_diagonal(&DVector::from_iterator(variances.len(), variances.iter().map(|v| 1.0 / v)));
        Self::from_precision(mean, p)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision_factor(&self) -> &DMatrix<f64> {
        &self.precision_factor
    }

    /// `P (x - m)` into `out`.
    fn apply_precision(&self, y: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.precision[i * d..(i + 1) * d];
            *o = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }

    /// Entry `(i, j)` of the precision matrix.
    pub fn precision_entry(&self, i: usize, j: usize) -> f64 {
        self.precision[i * self.mean.len() + j]
    }

    pub(crate) fn precision_row(&self, i: usize) -> &[f64] {
        let d = self.mean.len();
        &self.precision[i * d..(i + 1) * d]
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut pr = vec![0.0; r.len()];
        self.apply_precision(&r, &mut pr);
        0.5 * r.iter().zip(&pr).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.apply_precision(&r, out);
    }

    fn line<'a>(&'a self, x: &[f64], v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        check_dim(self.dim(), x.len()).ok()?;
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut pr = vec![0.0; r.len()];
        let mut pv = vec![0.0; r.len()];
        self.apply_precision(&r, &mut pr);
        self.apply_precision(v, &mut pv);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        Some(Box::new(QuadraticLine {
            a: 0.5 * dot(&r, &pr),
            b: dot(v, &pr),
            c: dot(v, &pv),
        }))
    }

    fn is_log_concave(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "gaussian"
    }
}
