//! Output analysis: effective sample size, Monte Carlo standard errors and
//! Kolmogorov–Smirnov distances.
//!
//! ESS follows the autoregressive spectral estimate used by coda: fit AR(k)
//! by Yule–Walker for every order up to the cap, keep the order with the
//! smallest AIC, and read the spectral density at zero off the fitted model.

use serde::Serialize;

use crate::chain::Chain;
use crate::error::{Error, Result};

pub const MIN_SERIES_LEN: usize = 100;
const MAX_AR_ORDER: usize = 50;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Biased autocovariances at lags `0..=max_lag`.
fn autocovariances(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    (0..=max_lag)
        .map(|lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// AR fit chosen by AIC: coefficients and innovation variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub coefficients: Vec<f64>,
    pub innovation_variance: f64,
}

impl ArFit {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Spectral density at frequency zero, normalized so that white noise
    /// gives its variance.
    pub fn spectrum_at_zero(&self) -> f64 {
        let s = 1.0 - self.coefficients.iter().sum::<f64>();
        self.innovation_variance / (s * s)
    }
}

/// Yule–Walker fit via Levinson–Durbin, order chosen by AIC up to
/// `min(50, n/10)`.
pub fn fit_ar(xs: &[f64]) -> Result<ArFit> {
    let n = xs.len();
    let max_order = MAX_AR_ORDER.min(n / 10);
    let acov = autocovariances(xs, max_order);
    if !(acov[0] >= 1e-300) {
        return Err(Error::DegenerateSeries(acov[0]));
    }
    let nf = n as f64;
    let mut phi: Vec<f64> = Vec::new();
    let mut sigma2 = acov[0];
    let mut best = (nf * sigma2.ln(), Vec::new(), sigma2);
    for k in 1..=max_order {
        let num = acov[k] - phi.iter().enumerate().map(|(j, a)| a * acov[k - 1 - j]).sum::<f64>();
        let kappa = num / sigma2;
        let mut next = vec![0.0; k];
        for j in 0..k - 1 {
            next[j] = phi[j] - kappa * phi[k - 2 - j];
        }
        next[k - 1] = kappa;
        phi = next;
        sigma2 *= 1.0 - kappa * kappa;
        if !(sigma2 > 0.0) {
            break;
        }
        let aic = nf * sigma2.ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, phi.clone(), sigma2);
        }
    }
    let (_, coefficients, sigma2) = best;
    // same small-sample correction as R's ar.yw
    let order = coefficients.len() as f64;
    let innovation_variance = sigma2 * nf / (nf - (order + 1.0));
    Ok(ArFit {
        coefficients,
        innovation_variance,
    })
}

/// Effective sample size of a scalar series, clamped to `(0, n]`.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::InvalidInput(format!("ESS needs at least {MIN_SERIES_LEN} values, got {n}")));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let var = variance(series);
    if !(var >= 1e-300) {
        return Err(Error::DegenerateSeries(var));
    }
    let spec = fit_ar(series)?.spectrum_at_zero();
    let raw = n as f64 * var / spec;
    Ok(if raw.is_finite() && raw > 0.0 { raw.min(n as f64) } else { f64::MIN_POSITIVE })
}

/// Monte Carlo standard error of the series mean.
pub fn mc_standard_error(series: &[f64]) -> Result<f64> {
    Ok((variance(series) / ess(series)?).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    pub per_dim: Vec<f64>,
    pub min_ess: f64,
    pub argmin_dim: usize,
    pub ess_per_second: f64,
}

/// Per-dimension ESS, its minimum and the minimum per second of sampling.
pub fn min_ess_report(chain: &Chain, dims: Option<&[usize]>) -> Result<EssReport> {
    if chain.is_empty() {
        return Err(Error::InvalidInput("empty chain".into()));
    }
    let all: Vec<usize> = (0..chain.dim()).collect();
    let dims = dims.unwrap_or(&all);
    if dims.is_empty() {
        return Err(Error::InvalidInput("no dimensions selected".into()));
    }
    let mut per_dim = Vec::with_capacity(dims.len());
    for &j in dims {
        if j >= chain.dim() {
            return Err(Error::DimensionMismatch { expected: chain.dim(), got: j + 1 });
        }
        per_dim.push(ess(&chain.column(j))?);
    }
    let (k, &min_ess) = per_dim
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let ess_per_second = if chain.wall_seconds > 0.0 { min_ess / chain.wall_seconds } else { f64::INFINITY };
    Ok(EssReport {
        per_dim,
        min_ess,
        argmin_dim: dims[k],
        ess_per_second,
    })
}

/// Sup distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// CDF of a 1-d density by trapezoidal quadrature on a uniform grid,
/// renormalized over `[lo, hi]` and linearly interpolated between nodes.
#[derive(Debug, Clone)]
pub struct QuadratureCdf {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl QuadratureCdf {
    pub fn new(density: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(hi > lo) || points < 2 {
            return Err(Error::InvalidInput("quadrature grid needs hi > lo and at least 2 points".into()));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let dens: Vec<f64> = (0..points).map(|i| density(lo + i as f64 * step)).collect();
        let mut values = vec![0.0; points];
        for i in 1..points {
            values[i] = values[i - 1] + 0.5 * step * (dens[i - 1] + dens[i]);
        }
        let total = values[points - 1];
        if !(total > 0.0) {
            return Err(Error::InvalidInput("density integrates to zero on the grid".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self { lo, step, values })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.step;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            return 1.0;
        }
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::EventCounts;
    use crate::rng::chain_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = chain_rng(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let e = normals(n, seed);
        let mut out = Vec::with_capacity(n);
        let mut x = e[0] / (1.0 - phi * phi).sqrt();
        for z in e {
            x = phi * x + z;
            out.push(x);
        }
        out
    }

    #[test]
    fn iid_ess_close_to_n() {
        let e = ess(&normals(10_000, 3)).unwrap() / 1e4;
        assert!((0.8..=1.2).contains(&e), "{e}");
    }

    #[test]
    fn ar1_ess_matches_integrated_autocorrelation() {
        let e = ess(&ar1(100_000, 0.5, 4)).unwrap() / 1e5;
        assert!((e - 1.0 / 3.0).abs() < 0.2 / 3.0, "{e}");
        let fit = fit_ar(&ar1(100_000, 0.5, 5)).unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn degenerate_and_short_series() {
        assert!(matches!(ess(&[2.5; 500]), Err(Error::DegenerateSeries(_))));
        assert!(matches!(ess(&[1.0; 50]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ess_never_exceeds_n() {
        // strongly anticorrelated: raw estimate exceeds n
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 1e-3 * (i as f64).sin()).collect();
        let e = ess(&alt).unwrap();
        assert!(e > 0.0 && e <= 1000.0);
    }

    fn chain_from_columns(cols: &[Vec<f64>], wall: f64) -> Chain {
        let n = cols[0].len();
        let mut c = Chain::new(cols.len(), "test");
        for i in 0..n {
            let row: Vec<f64> = cols.iter().map(|col| col[i]).collect();
            c.push(&row, EventCounts::default(), 1.0);
        }
        c.wall_seconds = wall;
        c
    }

    #[test]
    fn report_examples() {
        let a = normals(10_000, 6);
        let single = chain_from_columns(&[a.clone()], 1.0);
        let r = min_ess_report(&single, None).unwrap();
        assert_eq!(r.min_ess, ess(&a).unwrap());
        assert_eq!(r.argmin_dim, 0);

        let twin = chain_from_columns(&[a.clone(), a.clone()], 1.0);
        let r = min_ess_report(&twin, None).unwrap();
        assert!((r.per_dim[0] / r.per_dim[1] - 1.0).abs() <= 0.1);

        let iid = chain_from_columns(&[a, normals(10_000, 7)], 1.0);
        let r = min_ess_report(&iid, None).unwrap();
        assert!((r.ess_per_second / 1e4 - 1.0).abs() < 0.2);
        let sub = min_ess_report(&iid, Some(&[1])).unwrap();
        assert_eq!(sub.argmin_dim, 1);
    }

    #[test]
    fn ks_helpers() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 5e-4 + 1e-12);
        assert!((ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn quadrature_cdf_of_uniform() {
        let q = QuadratureCdf::new(|_| 1.0, 0.0, 2.0, 10_000).unwrap();
        assert!((q.cdf(0.5) - 0.25).abs() < 1e-12);
        assert_eq!(q.cdf(-1.0), 0.0);
        assert_eq!(q.cdf(3.0), 1.0);
    }
}
