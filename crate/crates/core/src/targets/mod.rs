//! Target models: potentials `U = -log pi`, gradients, closed-form line
//! restrictions and half-space constraints.

mod constraints;
mod csv_design;
mod gaussian;
mod logistic;
mod mixture;

use std::fmt::Debug;

pub use constraints::{boundary_hit, check_feasible, ConstrainedTarget, LinearConstraint, TruncatedGaussianTarget};
pub use csv_design::{load_design_csv, DesignData};
pub use gaussian::GaussianTarget;
pub use logistic::{synthetic_sparse_logistic, LogisticRegressionTarget, SyntheticLogistic};
pub use mixture::{MixtureComponent, MixtureTarget};

use crate::error::{Error, Result};
use crate::line::LineFn;

pub trait Target: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn potential(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Closed-form restriction `t -> U(x + t v)` with two derivatives.
    fn line<'a>(&'a self, _x: &[f64], _v: &[f64]) -> Option<Box<dyn LineFn + 'a>> {
        None
    }

    fn constraints(&self) -> &[LinearConstraint] {
        &[]
    }

    fn is_log_concave(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str;

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }
}

/// `g(t) = U(x + t v)` with `g'` and `g''`.
///
/// Fails with `Unsupported` for targets without a closed-form restriction;
/// callers then evaluate the potential along the flow instead.
pub fn line_potential<'a>(target: &'a dyn Target, x: &[f64], v: &[f64]) -> Result<Box<dyn LineFn + 'a>> {
    target
        .line(x, v)
        .ok_or_else(|| Error::Unsupported(format!("target `{}` has no line restriction", target.name())))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
