//! Python bindings: targets, surrogate flows, exact bouncy trajectories,
//! the HBPS sampler, config-driven runs and ESS diagnostics.

use std::path::Path;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bouncy_core::diagnostics::{self, min_ess_report};
use bouncy_core::harness::{run_config, ConfigError, HarnessError, RunConfig, SurrogateSpec, TargetSpec};
use bouncy_core::hbps::Hbps;
use bouncy_core::targets::GaussianTarget;
use bouncy_core::{AugmentedState, BouncyDynamics, Chain, Error, HarmonicFlow, LinearFlow, SurrogateFlow};

fn sampler_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotPsd(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config_err(e: ConfigError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn check_dim(what: &str, got: usize, dim: usize) -> PyResult<()> {
    if got != dim {
        return Err(PyValueError::new_err(format!("{what} has length {got}, target dimension is {dim}")));
    }
    Ok(())
}

fn rows(chain: &Chain) -> Vec<Vec<f64>> {
    chain.rows().map(<[f64]>::to_vec).collect()
}

/// Target density `exp(-U)`.
#[pyclass(name = "Target", frozen)]
struct PyTarget {
    inner: Box<dyn bouncy_core::Target>,
}

#[pymethods]
impl PyTarget {
    /// Build from the JSON `target` object accepted by the command line tool.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn from_json(text: &str, base_dir: &str) -> PyResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid JSON: {e}")))?;
        let spec = TargetSpec::from_value(&value, Path::new(base_dir)).map_err(config_err)?;
        Ok(PyTarget { inner: spec.build().map_err(config_err)? })
    }

    #[staticmethod]
    fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> PyResult<Self> {
        let d = mean.len();
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("covariance must be {d}x{d}")));
        }
        let flat: Vec<f64> = covariance.into_iter().flatten().collect();
        let cov = DMatrix::from_row_slice(d, d, &flat);
        Ok(PyTarget { inner: Box::new(GaussianTarget::from_covariance(mean, cov).map_err(sampler_err)?) })
    }

    #[staticmethod]
    fn isotropic(dim: usize) -> PyResult<Self> {
        if dim == 0 {
            return Err(PyValueError::new_err("dim must be positive"));
        }
        Ok(PyTarget { inner: Box::new(GaussianTarget::isotropic(dim)) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn potential(&self, x: Vec<f64>) -> PyResult<f64> {
        check_dim("x", x.len(), self.inner.dim())?;
        Ok(self.inner.potential(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        check_dim("x", x.len(), self.inner.dim())?;
        let mut g = vec![0.0; x.len()];
        self.inner.gradient(&x, &mut g);
        Ok(g)
    }

    fn __repr__(&self) -> String {
        format!("Target(dim={})", self.inner.dim())
    }
}

/// Surrogate flow: `linear` (free streaming) or `harmonic`.
#[pyclass(name = "Flow", frozen)]
struct PyFlow {
    harmonic: Option<HarmonicFlow>,
}

impl PyFlow {
    fn get(&self) -> &dyn SurrogateFlow {
        match &self.harmonic {
            Some(h) => h,
            None => &LinearFlow,
        }
    }
}

#[pymethods]
impl PyFlow {
    #[staticmethod]
    fn linear() -> Self {
        PyFlow { harmonic: None }
    }

    #[staticmethod]
    #[pyo3(signature = (center, scale = 1.0))]
    fn harmonic(center: Vec<f64>, scale: f64) -> PyResult<Self> {
        Ok(PyFlow { harmonic: Some(HarmonicFlow::new(center, scale).map_err(sampler_err)?) })
    }

    /// Parse the `surrogate` value of a config: `"linear"`, `"harmonic"` or an object.
    #[staticmethod]
    fn from_json(text: &str, dim: usize) -> PyResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid JSON: {e}")))?;
        match SurrogateSpec::from_value(Some(&value)).map_err(config_err)? {
            SurrogateSpec::Linear => Ok(Self::linear()),
            SurrogateSpec::Harmonic { center, scale } => Self::harmonic(center.unwrap_or_else(|| vec![0.0; dim]), scale),
        }
    }

    /// Position and velocity after time `t` of the unperturbed flow.
    fn advance(&self, t: f64, x: Vec<f64>, v: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        check_dim("v", v.len(), x.len())?;
        let (mut x, mut v) = (x, v);
        self.get().advance(t, &mut x, &mut v);
        Ok((x, v))
    }

    fn __repr__(&self) -> String {
        match &self.harmonic {
            Some(h) => format!("Flow.harmonic(scale={})", h.scale()),
            None => "Flow.linear()".into(),
        }
    }
}

/// Augmented state `(x, v, p)` with inertia `p >= 0`.
#[pyclass(name = "State", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: AugmentedState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(x: Vec<f64>, v: Vec<f64>, p: f64) -> PyResult<Self> {
        let s = AugmentedState::new(x, v, p);
        s.validate(s.x.len()).map_err(sampler_err)?;
        Ok(PyState { inner: s })
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.v.clone()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    /// Target potential plus kinetic energy plus inertia.
    fn energy(&self, target: &PyTarget) -> PyResult<f64> {
        check_dim("x", self.inner.x.len(), target.inner.dim())?;
        Ok(self.inner.energy(target.inner.as_ref()))
    }

    fn reversed(&self) -> Self {
        PyState { inner: self.inner.reversed() }
    }

    fn __repr__(&self) -> String {
        format!("State(x={:?}, v={:?}, p={})", self.inner.x, self.inner.v, self.inner.p)
    }
}

/// Run the exact bouncy dynamics for `travel_time`; returns the end state and the bounce count.
#[pyfunction]
#[pyo3(signature = (target, state, travel_time, flow = None))]
fn simulate(target: &PyTarget, state: &PyState, travel_time: f64, flow: Option<&PyFlow>) -> PyResult<(PyState, usize)> {
    check_dim("state", state.inner.x.len(), target.inner.dim())?;
    let linear = PyFlow::linear();
    let flow = flow.unwrap_or(&linear);
    let traj = BouncyDynamics::new(flow.get(), target.inner.as_ref()).simulate(travel_time, &state.inner).map_err(sampler_err)?;
    Ok((PyState { inner: traj.state }, traj.counts.bounces))
}

/// Mirror `v` in the hyperplane orthogonal to `g`.
#[pyfunction]
fn reflect(v: Vec<f64>, g: Vec<f64>) -> PyResult<Vec<f64>> {
    check_dim("g", g.len(), v.len())?;
    bouncy_core::reflect(&v, &g).map_err(sampler_err)
}

/// HBPS chain of `n` rows started at `x0`.
#[pyfunction]
#[pyo3(signature = (target, n, x0, travel_time = 1.0, seed = 0))]
fn sample_hbps(py: Python<'_>, target: &PyTarget, n: usize, x0: Vec<f64>, travel_time: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    check_dim("x0", x0.len(), target.inner.dim())?;
    if !(travel_time > 0.0 && travel_time.is_finite()) {
        return Err(PyValueError::new_err("travel_time must be positive"));
    }
    let t = target.inner.as_ref();
    let chain = py.detach(|| Hbps::new(t, travel_time).sample(n, &x0, seed)).map_err(sampler_err)?;
    Ok(rows(&chain))
}

/// Run a JSON config as the `sample` command does. Returns `(summary_json, chains)`.
#[pyfunction]
#[pyo3(signature = (config, base_dir = ".", workers = 1))]
fn run(py: Python<'_>, config: &str, base_dir: &str, workers: usize) -> PyResult<(String, Vec<Vec<Vec<f64>>>)> {
    let cfg = RunConfig::from_str(config, Path::new(base_dir)).map_err(config_err)?;
    let out = py.detach(|| run_config(&cfg, workers.max(1))).map_err(|e| match e {
        HarnessError::Config(c) => config_err(c),
        HarnessError::Sampler(s) => PyRuntimeError::new_err(format!("[{}] {s}", s.kind())),
    })?;
    Ok((out.summary.to_string(), out.chains.iter().map(rows).collect()))
}

/// Effective sample size of a scalar series (at least 100 values).
#[pyfunction]
fn ess(series: Vec<f64>) -> PyResult<f64> {
    diagnostics::ess(&series).map_err(sampler_err)
}

/// Per-column ESS of a row-major sample matrix: `(min_ess, argmin_dim, per_dim)`.
#[pyfunction]
fn min_ess(samples: Vec<Vec<f64>>) -> PyResult<(f64, usize, Vec<f64>)> {
    let d = samples.first().map_or(0, Vec::len);
    if d == 0 || samples.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("samples must be a nonempty list of equal-length rows"));
    }
    let chain = Chain::from_rows(d, samples.into_iter().flatten().collect());
    let r = min_ess_report(&chain, None).map_err(sampler_err)?;
    Ok((r.min_ess, r.argmin_dim, r.per_dim))
}

#[pymodule]
fn bouncy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTarget>()?;
    m.add_class::<PyFlow>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reflect, m)?)?;
    m.add_function(wrap_pyfunction!(sample_hbps, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(min_ess, m)?)?;
    Ok(())
}
