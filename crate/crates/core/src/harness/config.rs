//! JSON run configurations.
//!
//! Every parse error names the dotted path of the offending key. Unknown
//! keys are rejected so that typos do not silently fall back to defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::roots::SolverConfig;
use crate::surrogates::{HarmonicFlow, LinearFlow, SurrogateFlow};
use crate::targets::{
    load_design_csv, synthetic_sparse_logistic, ConstrainedTarget, GaussianTarget, LinearConstraint, LogisticRegressionTarget, MixtureComponent,
    MixtureTarget, Target, TruncatedGaussianTarget,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

/// A JSON object together with its dotted path, for error messages.
struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Obj<'a> {
    fn new(value: &'a Value, path: &str) -> CResult<Self> {
        match value {
            Value::Object(map) => Ok(Self { path: path.to_string(), map }),
            _ => Err(ConfigError::new(path, "expected an object")),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn allow(&self, keys: &[&str]) -> CResult<()> {
        for k in self.map.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(ConfigError::new(self.key(k), "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.map.get(k).filter(|v| !v.is_null())
    }

    fn has(&self, k: &str) -> bool {
        self.get(k).is_some()
    }

    fn f64(&self, k: &str) -> CResult<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| ConfigError::new(self.key(k), "expected a finite number")),
        }
    }

    fn f64_or(&self, k: &str, default: f64) -> CResult<f64> {
        Ok(self.f64(k)?.unwrap_or(default))
    }

    fn req_f64(&self, k: &str) -> CResult<f64> {
        self.f64(k)?.ok_or_else(|| ConfigError::new(self.key(k), "missing required key"))
    }

    fn positive(&self, k: &str, default: Option<f64>) -> CResult<f64> {
        let x = match default {
            Some(d) => self.f64_or(k, d)?,
            None => self.req_f64(k)?,
        };
        if x > 0.0 {
            Ok(x)
        } else {
            Err(ConfigError::new(self.key(k), format!("must be positive, got {x}")))
        }
    }

    fn u64(&self, k: &str) -> CResult<Option<u64>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| ConfigError::new(self.key(k), "expected a nonnegative integer")),
        }
    }

    fn usize_or(&self, k: &str, default: usize) -> CResult<usize> {
        Ok(self.u64(k)?.map_or(default, |x| x as usize))
    }

    fn at_least(&self, k: &str, default: usize, min: usize) -> CResult<usize> {
        let x = self.usize_or(k, default)?;
        if x < min {
            return Err(ConfigError::new(self.key(k), format!("must be >= {min}, got {x}")));
        }
        Ok(x)
    }

    fn bool_or(&self, k: &str, default: bool) -> CResult<bool> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| ConfigError::new(self.key(k), "expected true or false")),
        }
    }

    fn str(&self, k: &str) -> CResult<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v.as_str().map(Some).ok_or_else(|| ConfigError::new(self.key(k), "expected a string")),
        }
    }

    fn vec(&self, k: &str) -> CResult<Option<Vec<f64>>> {
        self.get(k).map(|v| numbers(v, &self.key(k))).transpose()
    }

    fn matrix(&self, k: &str) -> CResult<Option<DMatrix<f64>>> {
        let Some(v) = self.get(k) else { return Ok(None) };
        let key = self.key(k);
        let rows = v.as_array().ok_or_else(|| ConfigError::new(&key, "expected an array of rows"))?;
        let rows: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| numbers(r, &format!("{key}[{i}]")))
            .collect::<CResult<_>>()?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(ConfigError::new(key, "expected a nonempty square matrix"));
        }
        Ok(Some(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    fn obj(&self, k: &str) -> CResult<Option<Obj<'a>>> {
        self.get(k).map(|v| Obj::new(v, &self.key(k))).transpose()
    }
}

fn numbers(v: &Value, key: &str) -> CResult<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| ConfigError::new(key, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ConfigError::new(format!("{key}[{i}]"), "expected a finite number"))
        })
        .collect()
}

/// Moves a core error raised while building an object into a config error.
fn at(key: &str) -> impl Fn(Error) -> ConfigError + '_ {
    move |e| ConfigError::new(key, e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum GaussianSpec {
    Covariance { mean: Vec<f64>, covariance: DMatrix<f64> },
    Precision { mean: Vec<f64>, precision: DMatrix<f64> },
}

impl GaussianSpec {
    fn parse(p: &Obj, extra: &[&str]) -> CResult<Self> {
        let mut allowed = vec!["dim", "mean", "covariance", "precision", "variances", "rho"];
        allowed.extend_from_slice(extra);
        p.allow(&allowed)?;
        let given = ["covariance", "precision", "variances", "rho"].iter().filter(|k| p.has(k)).count();
        if given > 1 {
            return Err(ConfigError::new(&p.path, "give at most one of covariance, precision, variances, rho"));
        }
        let dim_key = p.u64("dim")?.map(|d| d as usize);
        let mean = p.vec("mean")?;
        // (matrix, is_precision); None means identity covariance
        let matrix = if let Some(c) = p.matrix("covariance")? {
            Some((c, false))
        } else if let Some(l) = p.matrix("precision")? {
            Some((l, true))
        } else if let Some(vars) = p.vec("variances")? {
            if vars.is_empty() || vars.iter().any(|v| !(*v > 0.0)) {
                return Err(ConfigError::new(p.key("variances"), "expected a nonempty array of positive numbers"));
            }
            Some((DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vars)), false))
        } else if let Some(rho) = p.f64("rho")? {
            if !(rho.abs() < 1.0) {
                return Err(ConfigError::new(p.key("rho"), "must lie in (-1, 1)"));
            }
            Some((DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]), false))
        } else {
            None
        };
        let dim = match &matrix {
            Some((m, _)) => m.nrows(),
            None => dim_key.or(mean.as_ref().map(Vec::len)).unwrap_or(0),
        };
        if dim == 0 {
            return Err(ConfigError::new(p.key("dim"), "missing or zero dimension"));
        }
        if let Some(d) = dim_key {
            if d != dim {
                return Err(ConfigError::new(p.key("dim"), format!("dim {d} disagrees with the {dim}-dimensional parameters")));
            }
        }
        let mean = mean.unwrap_or_else(|| vec![0.0; dim]);
        if mean.len() != dim {
            return Err(ConfigError::new(p.key("mean"), format!("expected {dim} entries, got {}", mean.len())));
        }
        Ok(match matrix {
            Some((precision, true)) => GaussianSpec::Precision { mean, precision },
            Some((covariance, false)) => GaussianSpec::Covariance { mean, covariance },
            None => GaussianSpec::Covariance {
                mean,
                covariance: DMatrix::identity(dim, dim),
            },
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            GaussianSpec::Covariance { mean, .. } | GaussianSpec::Precision { mean, .. } => mean.len(),
        }
    }

    pub fn build(&self) -> crate::error::Result<GaussianTarget> {
        match self {
            GaussianSpec::Covariance { mean, covariance } => GaussianTarget::from_covariance(mean.clone(), covariance.clone()),
            GaussianSpec::Precision { mean, precision } => GaussianTarget::from_precision(mean.clone(), precision.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogisticData {
    Csv(PathBuf),
    Inline { design: Vec<f64>, labels: Vec<f64>, dim: usize },
    Synthetic { rows: usize, dim: usize, nonzero: usize, signal: f64, data_seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Gaussian(GaussianSpec),
    TruncatedGaussian { base: GaussianSpec, signs: Vec<f64> },
    Logistic { data: LogisticData, prior_scale: f64, column_scales: Option<Vec<f64>> },
    Mixture { components: Vec<MixtureComponent>, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub constraints: Vec<(Vec<f64>, f64)>,
}

impl TargetSpec {
    /// Parse a `{type, parameters, constraints}` object; relative CSV paths resolve against `base_dir`.
    pub fn from_value(value: &Value, base_dir: &Path) -> CResult<Self> {
        Self::parse(value, "target", base_dir)
    }

    fn parse(value: &Value, path: &str, base_dir: &Path) -> CResult<Self> {
        let t = Obj::new(value, path)?;
        t.allow(&["type", "parameters", "constraints"])?;
        let ty = t.str("type")?.ok_or_else(|| ConfigError::new(t.key("type"), "missing required key"))?;
        let empty = Value::Object(Map::new());
        let p = Obj::new(t.get("parameters").unwrap_or(&empty), &t.key("parameters"))?;
        let kind = match ty {
            "gaussian" => TargetKind::Gaussian(GaussianSpec::parse(&p, &[])?),
            "truncated_gaussian" => {
                let base = GaussianSpec::parse(&p, &["signs"])?;
                let signs = p.vec("signs")?.unwrap_or_else(|| vec![1.0; base.dim()]);
                if signs.len() != base.dim() || signs.iter().any(|s| s.abs() != 1.0) {
                    return Err(ConfigError::new(p.key("signs"), format!("expected {} entries of +1 or -1", base.dim())));
                }
                TargetKind::TruncatedGaussian { base, signs }
            }
            "logistic" => {
                p.allow(&["csv", "design", "labels", "prior_scale", "column_scales"])?;
                let data = match (p.str("csv")?, p.has("design")) {
                    (Some(_), true) => return Err(ConfigError::new(&p.path, "give either csv or design/labels, not both")),
                    (Some(file), false) => LogisticData::Csv(base_dir.join(file)),
                    (None, true) => {
                        let key = p.key("design");
                        let rows = p.get("design").and_then(Value::as_array).ok_or_else(|| ConfigError::new(&key, "expected an array of rows"))?;
                        let rows: Vec<Vec<f64>> = rows
                            .iter()
                            .enumerate()
                            .map(|(i, r)| numbers(r, &format!("{key}[{i}]")))
                            .collect::<CResult<_>>()?;
                        let dim = rows.first().map_or(0, Vec::len);
                        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
                            return Err(ConfigError::new(key, "rows must be nonempty and of equal length"));
                        }
                        let labels = p.vec("labels")?.ok_or_else(|| ConfigError::new(p.key("labels"), "missing required key"))?;
                        if labels.len() != rows.len() || labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
                            return Err(ConfigError::new(p.key("labels"), format!("expected {} labels in {{0, 1}}", rows.len())));
                        }
                        LogisticData::Inline {
                            design: rows.concat(),
                            labels,
                            dim,
                        }
                    }
                    (None, false) => return Err(ConfigError::new(p.key("csv"), "missing: give csv or design/labels")),
                };
                logistic_kind(&p, data)?
            }
            "synthetic_logistic" => {
                p.allow(&["rows", "dim", "nonzero", "signal", "data_seed", "prior_scale", "column_scales"])?;
                let dim = p.at_least("dim", 50, 1)?;
                let nonzero = p.usize_or("nonzero", 5.min(dim))?;
                if nonzero > dim {
                    return Err(ConfigError::new(p.key("nonzero"), "must not exceed dim"));
                }
                let data = LogisticData::Synthetic {
                    rows: p.at_least("rows", 500, 1)?,
                    dim,
                    nonzero,
                    signal: p.f64_or("signal", 1.0)?,
                    data_seed: p.u64("data_seed")?.unwrap_or(0),
                };
                logistic_kind(&p, data)?
            }
            "mixture" => {
                p.allow(&["components", "dim"])?;
                let key = p.key("components");
                let comps = match p.get("components") {
                    None => vec![(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)],
                    Some(v) => v
                        .as_array()
                        .ok_or_else(|| ConfigError::new(&key, "expected an array of components"))?
                        .iter()
                        .enumerate()
                        .map(|(i, c)| {
                            let c = Obj::new(c, &format!("{key}[{i}]"))?;
                            c.allow(&["weight", "mean", "variance"])?;
                            Ok((c.positive("weight", Some(1.0))?, c.req_f64("mean")?, c.positive("variance", Some(1.0))?))
                        })
                        .collect::<CResult<_>>()?,
                };
                if comps.is_empty() {
                    return Err(ConfigError::new(key, "need at least one component"));
                }
                TargetKind::Mixture {
                    components: comps
                        .into_iter()
                        .map(|(weight, mean, variance)| MixtureComponent { weight, mean, variance })
                        .collect(),
                    dim: p.at_least("dim", 1, 1)?,
                }
            }
            other => {
                return Err(ConfigError::new(
                    t.key("type"),
                    format!("unknown target `{other}` (expected gaussian, truncated_gaussian, logistic, synthetic_logistic or mixture)"),
                ))
            }
        };
        let mut constraints = Vec::new();
        if let Some(v) = t.get("constraints") {
            let key = t.key("constraints");
            let arr = v.as_array().ok_or_else(|| ConfigError::new(&key, "expected an array"))?;
            for (i, c) in arr.iter().enumerate() {
                let c = Obj::new(c, &format!("{key}[{i}]"))?;
                c.allow(&["normal", "offset"])?;
                let normal = c.vec("normal")?.ok_or_else(|| ConfigError::new(c.key("normal"), "missing required key"))?;
                constraints.push((normal, c.f64_or("offset", 0.0)?));
            }
        }
        let spec = TargetSpec { kind, constraints };
        if let Some(d) = spec.declared_dim() {
            for (i, (normal, _)) in spec.constraints.iter().enumerate() {
                if normal.len() != d {
                    return Err(ConfigError::new(format!("{}.constraints[{i}].normal", path), format!("expected {d} entries")));
                }
            }
        }
        Ok(spec)
    }

    /// Dimension known without loading data files.
    pub fn declared_dim(&self) -> Option<usize> {
        match &self.kind {
            TargetKind::Gaussian(g) => Some(g.dim()),
            TargetKind::TruncatedGaussian { base, .. } => Some(base.dim()),
            TargetKind::Logistic { data, .. } => match data {
                LogisticData::Csv(_) => None,
                LogisticData::Inline { dim, .. } | LogisticData::Synthetic { dim, .. } => Some(*dim),
            },
            TargetKind::Mixture { dim, .. } => Some(*dim),
        }
    }

    /// Builds the target. Construction failures (singular covariance,
    /// unreadable design file) are reported against the `target` key.
    pub fn build(&self) -> CResult<Box<dyn Target>> {
        let key = "target.parameters";
        let base: Box<dyn Target> = match &self.kind {
            TargetKind::Gaussian(g) => Box::new(g.build().map_err(at(key))?),
            TargetKind::TruncatedGaussian { base, signs } => Box::new(TruncatedGaussianTarget::new(base.build().map_err(at(key))?, signs.clone()).map_err(at(key))?),
            TargetKind::Logistic {
                data,
                prior_scale,
                column_scales,
            } => {
                let (design, labels, dim) = match data {
                    LogisticData::Csv(path) => {
                        let d = load_design_csv(path).map_err(at("target.parameters.csv"))?;
                        (d.design, d.labels, d.dim)
                    }
                    LogisticData::Inline { design, labels, dim } => (design.clone(), labels.clone(), *dim),
                    LogisticData::Synthetic {
                        rows,
                        dim,
                        nonzero,
                        signal,
                        data_seed,
                    } => {
                        let s = synthetic_sparse_logistic(*rows, *dim, *nonzero, *signal, *data_seed).map_err(at(key))?;
                        (s.design, s.labels, s.dim)
                    }
                };
                let mut t = LogisticRegressionTarget::new(design, labels, dim, *prior_scale).map_err(at(key))?;
                if let Some(scales) = column_scales {
                    t = t.with_column_scales(scales).map_err(at("target.parameters.column_scales"))?;
                }
                Box::new(t)
            }
            TargetKind::Mixture { components, dim } => Box::new(MixtureTarget::new(components.clone(), *dim).map_err(at(key))?),
        };
        if self.constraints.is_empty() {
            return Ok(base);
        }
        let d = base.dim();
        let mut cs = Vec::with_capacity(self.constraints.len());
        for (i, (normal, offset)) in self.constraints.iter().enumerate() {
            let k = format!("target.constraints[{i}]");
            if normal.len() != d {
                return Err(ConfigError::new(format!("{k}.normal"), format!("expected {d} entries")));
            }
            cs.push(LinearConstraint::new(normal.clone(), *offset).map_err(at(&k))?);
        }
        Ok(Box::new(ConstrainedTarget::new(base, cs).map_err(at("target.constraints"))?))
    }

    /// Start point used when the config gives none: the orthant's `signs`
    /// vector for truncated targets, the origin otherwise.
    pub fn default_start(&self, dim: usize) -> Vec<f64> {
        match &self.kind {
            TargetKind::TruncatedGaussian { signs, .. } => signs.clone(),
            _ => vec![0.0; dim],
        }
    }
}

fn logistic_kind(p: &Obj, data: LogisticData) -> CResult<TargetKind> {
    let prior_scale = p.positive("prior_scale", Some(1.0))?;
    let column_scales = p.vec("column_scales")?;
    if let Some(s) = &column_scales {
        if s.iter().any(|x| !(*x > 0.0)) {
            return Err(ConfigError::new(p.key("column_scales"), "scales must be positive"));
        }
    }
    Ok(TargetKind::Logistic {
        data,
        prior_scale,
        column_scales,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateSpec {
    Linear,
    Harmonic { center: Option<Vec<f64>>, scale: f64 },
}

impl SurrogateSpec {
    pub fn from_value(value: Option<&Value>) -> CResult<Self> {
        Self::parse(value)
    }

    fn parse(value: Option<&Value>) -> CResult<Self> {
        let key = "surrogate";
        match value {
            None | Some(Value::Null) => Ok(SurrogateSpec::Linear),
            Some(Value::String(s)) => match s.as_str() {
                "linear" => Ok(SurrogateSpec::Linear),
                "harmonic" => Ok(SurrogateSpec::Harmonic { center: None, scale: 1.0 }),
                other => Err(ConfigError::new(key, format!("unknown surrogate `{other}` (expected linear or harmonic)"))),
            },
            Some(v) => {
                let o = Obj::new(v, key)?;
                o.allow(&["type", "center", "scale"])?;
                match o.str("type")? {
                    Some("linear") => {
                        o.allow(&["type"])?;
                        Ok(SurrogateSpec::Linear)
                    }
                    Some("harmonic") => Ok(SurrogateSpec::Harmonic {
                        center: o.vec("center")?,
                        scale: o.positive("scale", Some(1.0))?,
                    }),
                    Some(other) => Err(ConfigError::new(o.key("type"), format!("unknown surrogate `{other}` (expected linear or harmonic)"))),
                    None => Err(ConfigError::new(o.key("type"), "missing required key")),
                }
            }
        }
    }

    pub fn build(&self, dim: usize) -> CResult<Box<dyn SurrogateFlow>> {
        match self {
            SurrogateSpec::Linear => Ok(Box::new(LinearFlow)),
            SurrogateSpec::Harmonic { center, scale } => {
                let center = center.clone().unwrap_or_else(|| vec![0.0; dim]);
                if center.len() != dim {
                    return Err(ConfigError::new("surrogate.center", format!("expected {dim} entries, got {}", center.len())));
                }
                Ok(Box::new(HarmonicFlow::new(center, *scale).map_err(at("surrogate"))?))
            }
        }
    }
}

fn parse_solver(root: &Obj) -> CResult<SolverConfig> {
    let mut cfg = SolverConfig::default();
    let Some(s) = root.obj("solver")? else { return Ok(cfg) };
    s.allow(&["newton_tol", "max_newton_iters", "scan_step", "max_events", "convexity_tol"])?;
    cfg.newton_tol = s.positive("newton_tol", Some(cfg.newton_tol))?;
    cfg.max_newton_iters = s.at_least("max_newton_iters", cfg.max_newton_iters, 1)?;
    if s.has("scan_step") {
        cfg.scan_step = Some(s.positive("scan_step", None)?);
    }
    cfg.max_events = s.at_least("max_events", cfg.max_events, 1)?;
    cfg.convexity_tol = s.f64_or("convexity_tol", cfg.convexity_tol)?;
    if !(cfg.convexity_tol >= 0.0) {
        return Err(ConfigError::new("solver.convexity_tol", "must be >= 0"));
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseStep {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorSpec {
    Coordinate,
    Blocks(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSpec {
    Hbps {
        travel_time: f64,
    },
    Nuts {
        base_step: BaseStep,
        max_depth: usize,
        uturn_tol: f64,
        pilot_iterations: usize,
        pilot_travel_time: f64,
    },
    Split {
        step: f64,
        steps_per_proposal: usize,
        leapfrog_substeps: Option<usize>,
    },
    Local {
        travel_time: f64,
        factors: FactorSpec,
    },
    Bps {
        refresh_rate: f64,
        total_time: f64,
        thinning: bool,
    },
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Hbps { .. } => "hbps",
            SamplerSpec::Nuts { .. } => "hbps-nuts",
            SamplerSpec::Split { .. } => "hbps-split",
            SamplerSpec::Local { .. } => "hbps-local",
            SamplerSpec::Bps { .. } => "bps",
        }
    }
}

const COMMON_KEYS: [&str; 10] = ["sampler", "target", "surrogate", "iterations", "seed", "output_dir", "thin", "chains", "x0", "solver"];

fn parse_sampler(root: &Obj) -> CResult<SamplerSpec> {
    let name = root.str("sampler")?.ok_or_else(|| ConfigError::new("sampler", "missing required key"))?;
    let (spec, extra): (SamplerSpec, &[&str]) = match name {
        "hbps" => (
            SamplerSpec::Hbps {
                travel_time: root.positive("travel_time", Some(1.0))?,
            },
            &["travel_time"],
        ),
        "hbps-nuts" => {
            let base_step = match root.get("base_step") {
                None => BaseStep::Auto,
                Some(Value::String(s)) if s == "auto" => BaseStep::Auto,
                Some(Value::Number(_)) => BaseStep::Fixed(root.positive("base_step", None)?),
                Some(_) => return Err(ConfigError::new("base_step", "expected a positive number or \"auto\"")),
            };
            let max_depth = root.at_least("max_depth", 10, 1)?;
            if max_depth > 30 {
                return Err(ConfigError::new("max_depth", "must be <= 30"));
            }
            (
                SamplerSpec::Nuts {
                    base_step,
                    max_depth,
                    uturn_tol: root.f64_or("uturn_tol", 0.0)?,
                    pilot_iterations: root.at_least("pilot_iterations", 500, 100)?,
                    pilot_travel_time: root.positive("pilot_travel_time", Some(1.0))?,
                },
                &["base_step", "max_depth", "uturn_tol", "pilot_iterations", "pilot_travel_time"],
            )
        }
        "hbps-split" => {
            let leapfrog_substeps = match root.str("inner_flow")?.unwrap_or("exact") {
                "exact" => {
                    if root.has("leapfrog_substeps") {
                        return Err(ConfigError::new("leapfrog_substeps", "only used with inner_flow = \"leapfrog\""));
                    }
                    None
                }
                "leapfrog" => Some(root.at_least("leapfrog_substeps", 1, 1)?),
                other => return Err(ConfigError::new("inner_flow", format!("unknown inner flow `{other}` (expected exact or leapfrog)"))),
            };
            (
                SamplerSpec::Split {
                    step: root.positive("step", Some(0.05))?,
                    steps_per_proposal: root.at_least("steps_per_proposal", 20, 1)?,
                    leapfrog_substeps,
                },
                &["step", "steps_per_proposal", "inner_flow", "leapfrog_substeps"],
            )
        }
        "hbps-local" => {
            let factors = match root.get("factors") {
                None => FactorSpec::Coordinate,
                Some(Value::String(s)) if s == "coordinate" => FactorSpec::Coordinate,
                Some(Value::Array(blocks)) => FactorSpec::Blocks(
                    blocks
                        .iter()
                        .enumerate()
                        .map(|(i, b)| {
                            let key = format!("factors[{i}]");
                            b.as_array()
                                .ok_or_else(|| ConfigError::new(&key, "expected an array of coordinate indices"))?
                                .iter()
                                .map(|j| j.as_u64().map(|j| j as usize).ok_or_else(|| ConfigError::new(&key, "indices must be nonnegative integers")))
                                .collect()
                        })
                        .collect::<CResult<_>>()?,
                ),
                Some(_) => return Err(ConfigError::new("factors", "expected \"coordinate\" or an array of index blocks")),
            };
            (
                SamplerSpec::Local {
                    travel_time: root.positive("travel_time", Some(1.0))?,
                    factors,
                },
                &["travel_time", "factors"],
            )
        }
        "bps" => {
            let refresh_rate = root.f64_or("refresh_rate", 1.0)?;
            if !(refresh_rate >= 0.0) {
                return Err(ConfigError::new("refresh_rate", "must be >= 0"));
            }
            (
                SamplerSpec::Bps {
                    refresh_rate,
                    total_time: root.positive("total_time", Some(1.0))?,
                    thinning: root.bool_or("thinning", false)?,
                },
                &["refresh_rate", "total_time", "thinning"],
            )
        }
        other => {
            return Err(ConfigError::new(
                "sampler",
                format!("unknown sampler `{other}` (expected hbps, hbps-nuts, hbps-split, hbps-local or bps)"),
            ))
        }
    };
    let mut allowed = COMMON_KEYS.to_vec();
    allowed.extend_from_slice(extra);
    root.allow(&allowed)?;
    Ok(spec)
}

fn read_json(path: &Path) -> CResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::new("", format!("invalid JSON in {}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn parse_target(root: &Obj, base: &Path) -> CResult<TargetSpec> {
    let t = root.get("target").ok_or_else(|| ConfigError::new("target", "missing required key"))?;
    TargetSpec::parse(t, "target", base)
}

fn output_dir(root: &Obj, base: &Path) -> CResult<PathBuf> {
    Ok(base.join(root.str("output_dir")?.unwrap_or("output")))
}

fn x0(root: &Obj, target: &TargetSpec) -> CResult<Option<Vec<f64>>> {
    let x0 = root.vec("x0")?;
    if let (Some(x), Some(d)) = (&x0, target.declared_dim()) {
        if x.len() != d {
            return Err(ConfigError::new("x0", format!("expected {d} entries, got {}", x.len())));
        }
    }
    Ok(x0)
}

/// Configuration of the `sample` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sampler: SamplerSpec,
    pub target: TargetSpec,
    pub surrogate: SurrogateSpec,
    pub iterations: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub thin: usize,
    pub chains: usize,
    pub x0: Option<Vec<f64>>,
    pub solver: SolverConfig,
    /// The parsed JSON, echoed into the summary.
    pub raw: Value,
}

impl RunConfig {
    /// Relative paths (`output_dir`, design CSVs) resolve against `base`.
    pub fn from_value(raw: Value, base: &Path) -> CResult<Self> {
        let root = Obj::new(&raw, "")?;
        let sampler = parse_sampler(&root)?;
        let target = parse_target(&root, base)?;
        let surrogate = SurrogateSpec::parse(root.get("surrogate"))?;
        if surrogate != SurrogateSpec::Linear && matches!(sampler, SamplerSpec::Nuts { .. } | SamplerSpec::Bps { .. }) {
            return Err(ConfigError::new("surrogate", format!("sampler `{}` only supports the linear surrogate", sampler.name())));
        }
        let x0 = x0(&root, &target)?;
        Ok(Self {
            iterations: root.at_least("iterations", 1000, 1)?,
            seed: root.u64("seed")?.unwrap_or(0),
            output_dir: output_dir(&root, base)?,
            thin: root.at_least("thin", 1, 1)?,
            chains: root.at_least("chains", 1, 1)?,
            solver: parse_solver(&root)?,
            sampler,
            target,
            surrogate,
            x0,
            raw,
        })
    }

    pub fn from_str(text: &str, base: &Path) -> CResult<Self> {
        let raw = serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
        Self::from_value(raw, base)
    }

    pub fn load(path: impl AsRef<Path>) -> CResult<Self> {
        let path = path.as_ref();
        Self::from_value(read_json(path)?, &base_dir(path))
    }
}

/// Configuration of the `converge` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub target: TargetSpec,
    pub surrogate: SurrogateSpec,
    pub delta_t: Vec<f64>,
    pub replications: usize,
    pub horizon: f64,
    pub seed: u64,
    pub match_tol: f64,
    pub grid_points: usize,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
}

impl ConvergeConfig {
    pub fn from_value(raw: &Value, base: &Path) -> CResult<Self> {
        let root = Obj::new(raw, "")?;
        root.allow(&[
            "target",
            "surrogate",
            "delta_t",
            "replications",
            "horizon",
            "seed",
            "match_tol",
            "grid_points",
            "solver",
            "output_dir",
        ])?;
        let delta_t = root.vec("delta_t")?.unwrap_or_else(|| vec![0.4, 0.2, 0.1, 0.05, 0.025]);
        if delta_t.is_empty() || delta_t.iter().any(|d| !(*d > 0.0)) {
            return Err(ConfigError::new("delta_t", "expected a nonempty array of positive step sizes"));
        }
        let target = parse_target(&root, base)?;
        if !target.constraints.is_empty() || matches!(target.kind, TargetKind::TruncatedGaussian { .. }) {
            return Err(ConfigError::new("target", "the coupling study does not support constraints"));
        }
        Ok(Self {
            target,
            surrogate: SurrogateSpec::parse(root.get("surrogate"))?,
            delta_t,
            replications: root.at_least("replications", 2000, 100)?,
            horizon: root.positive("horizon", Some(1.0))?,
            seed: root.u64("seed")?.unwrap_or(0),
            match_tol: root.positive("match_tol", Some(1e-9))?,
            grid_points: root.usize_or("grid_points", 1000)?,
            solver: parse_solver(&root)?,
            output_dir: output_dir(&root, base)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> CResult<Self> {
        let path = path.as_ref();
        Self::from_value(&read_json(path)?, &base_dir(path))
    }
}

/// Configuration of the `benchmark` subcommand: HBPS over a travel-time
/// grid against BPS over a refresh-rate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub target: TargetSpec,
    pub iterations: usize,
    pub seed: u64,
    /// Independent repetitions per setting; ESS figures are averaged.
    pub repeats: usize,
    pub travel_times: Vec<f64>,
    pub refresh_rates: Vec<f64>,
    pub bps_total_time: f64,
    pub x0: Option<Vec<f64>>,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
}

impl BenchmarkConfig {
    pub fn from_value(raw: &Value, base: &Path) -> CResult<Self> {
        let root = Obj::new(raw, "")?;
        root.allow(&[
            "target",
            "iterations",
            "seed",
            "repeats",
            "travel_times",
            "refresh_rates",
            "bps_total_time",
            "x0",
            "solver",
            "output_dir",
        ])?;
        let grid = |k: &str, default: Vec<f64>, allow_zero: bool| -> CResult<Vec<f64>> {
            let g = root.vec(k)?.unwrap_or(default);
            if g.is_empty() || g.iter().any(|x| !(*x > 0.0 || (allow_zero && *x == 0.0))) {
                return Err(ConfigError::new(k, "expected a nonempty array of positive numbers"));
            }
            Ok(g)
        };
        let target = parse_target(&root, base)?;
        Ok(Self {
            iterations: root.at_least("iterations", 5000, 100)?,
            seed: root.u64("seed")?.unwrap_or(0),
            repeats: root.at_least("repeats", 1, 1)?,
            travel_times: grid("travel_times", vec![0.5, 1.0, 2.0], false)?,
            refresh_rates: grid("refresh_rates", vec![0.01, 0.1, 1.0], true)?,
            bps_total_time: root.positive("bps_total_time", Some(1.0))?,
            x0: x0(&root, &target)?,
            solver: parse_solver(&root)?,
            output_dir: output_dir(&root, base)?,
            target,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> CResult<Self> {
        let path = path.as_ref();
        Self::from_value(&read_json(path)?, &base_dir(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: Value) -> CResult<RunConfig> {
        RunConfig::from_value(v, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config_defaults() {
        let c = parse(json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}})).unwrap();
        assert_eq!(c.sampler, SamplerSpec::Hbps { travel_time: 1.0 });
        assert_eq!((c.iterations, c.thin, c.chains, c.seed), (1000, 1, 1, 0));
        assert_eq!(c.output_dir, Path::new("/tmp/output"));
        assert_eq!(c.target.build().unwrap().dim(), 2);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse(json!({"sampler": "hmc", "target": {"type": "gaussian"}})).unwrap_err();
        assert_eq!(e.key, "sampler");
        let e = parse(json!({"sampler": "bps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "travel_time": 1.0})).unwrap_err();
        assert_eq!(e.key, "travel_time");
        let e = parse(json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2, "mean": [1, "a"]}}})).unwrap_err();
        assert_eq!(e.key, "target.parameters.mean[1]");
        let e = parse(json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "thin": 0})).unwrap_err();
        assert_eq!(e.key, "thin");
        let e = parse(json!({"sampler": "hbps-nuts", "target": {"type": "gaussian", "parameters": {"dim": 1}}, "surrogate": "harmonic"})).unwrap_err();
        assert_eq!(e.key, "surrogate");
        let e = parse(json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "x0": [1.0]})).unwrap_err();
        assert_eq!(e.key, "x0");
    }

    #[test]
    fn sampler_specific_keys() {
        let c = parse(json!({"sampler": "hbps-nuts", "target": {"type": "gaussian", "parameters": {"rho": 0.9}}, "base_step": "auto"})).unwrap();
        assert!(matches!(c.sampler, SamplerSpec::Nuts { base_step: BaseStep::Auto, pilot_iterations: 500, .. }));
        let c = parse(json!({"sampler": "hbps-split", "target": {"type": "mixture"}, "inner_flow": "leapfrog", "leapfrog_substeps": 3})).unwrap();
        assert!(matches!(c.sampler, SamplerSpec::Split { leapfrog_substeps: Some(3), .. }));
        let c = parse(json!({"sampler": "hbps-local", "target": {"type": "gaussian", "parameters": {"dim": 3}}, "factors": [[0, 1], [2]]})).unwrap();
        assert_eq!(
            c.sampler,
            SamplerSpec::Local {
                travel_time: 1.0,
                factors: FactorSpec::Blocks(vec![vec![0, 1], vec![2]])
            }
        );
    }

    #[test]
    fn targets_and_constraints() {
        let c = parse(json!({
            "sampler": "hbps",
            "target": {"type": "gaussian", "parameters": {"variances": [1.0, 4.0]}, "constraints": [{"normal": [1.0, 0.0], "offset": 0.0}]}
        }))
        .unwrap();
        let t = c.target.build().unwrap();
        assert_eq!(t.constraints().len(), 1);
        let c = parse(json!({"sampler": "hbps", "target": {"type": "truncated_gaussian", "parameters": {"dim": 2, "signs": [1, -1]}}})).unwrap();
        assert_eq!(c.target.default_start(2), vec![1.0, -1.0]);
        let c = parse(json!({"sampler": "hbps", "target": {"type": "logistic", "parameters": {"design": [[1.0], [-1.0]], "labels": [1, 0]}}})).unwrap();
        assert_eq!(c.target.build().unwrap().dim(), 1);
        let e = parse(json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"covariance": [[1.0, 2.0], [2.0, 1.0]]}}}))
            .unwrap()
            .target
            .build()
            .unwrap_err();
        assert_eq!(e.key, "target.parameters");
        let e = parse(json!({"sampler": "hbps", "target": {"type": "cauchy"}})).unwrap_err();
        assert_eq!(e.key, "target.type");
    }
}
