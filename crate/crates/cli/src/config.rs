//! Run configuration: flat `key=value` text with dotted namespaces, or a
//! flat JSON object with the same keys.
//!
//! ```text
//! dim=1
//! cells=31
//! beta=pme:2
//! coeff.f=logistic_f
//! coeff.f.lambda=1.0
//! init.c=sine
//! init.c.amplitude=0.5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rpme::model::{Beta, Params};
use rpme::{
    BoundaryKind, CoefficientSet, Diffusion, Drift, GridSpec, InitialData, SimulationConfig, Source,
};

use crate::CliError;

/// A named preset and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub params: Params,
}

impl Preset {
    fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Params::new(),
        }
    }
}

/// Settings of the `transform-demo` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSettings {
    pub k_points: usize,
    pub d_points: usize,
    pub refine: usize,
    /// `one` for `φ ≡ 1`, `capped` for `min(1, 1/β′)`.
    pub phi: String,
    pub scale: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub cells: usize,
    pub t_final: f64,
    pub theta: f64,
    pub bc: BoundaryKind,
    pub beta: Beta,
    pub f: Preset,
    pub a: Preset,
    pub b: Preset,
    pub c0: Preset,
    pub y0: Preset,
    pub q: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub snapshot_stride: Option<usize>,
    pub quad_refine: usize,
    pub workers: usize,
    pub max_dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub r_indices: Vec<usize>,
    pub lags: Vec<f64>,
    pub levels: Vec<usize>,
    pub eps: Vec<f64>,
    pub weak_tests: usize,
    pub transform: TransformSettings,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            cells: 31,
            t_final: 1.0,
            theta: 0.5,
            bc: BoundaryKind::Dirichlet,
            beta: Beta::Pme { m: 2.0 },
            f: Preset::named("zero"),
            a: Preset::named("zero"),
            b: Preset::named("zero"),
            c0: Preset::named("zero"),
            y0: Preset::named("zero"),
            q: 4.0,
            n_paths: 1,
            seed: 0,
            snapshot_stride: None,
            quad_refine: 4,
            workers: 0,
            max_dt: None,
            n_steps: None,
            r_indices: Vec::new(),
            lags: vec![0.0078125, 0.015625, 0.03125, 0.0625, 0.125],
            levels: vec![15, 31, 63],
            eps: vec![0.1, 0.025, 0.00625],
            weak_tests: 4,
            transform: TransformSettings {
                k_points: 256,
                d_points: 256,
                refine: 4,
                phi: "capped".into(),
                scale: 1.0,
                p: 2.0,
            },
            out: PathBuf::from("rpme-out"),
        }
    }
}

fn schema(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Schema {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| schema(key, e))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(key, x)).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

const PRESET_KEYS: [&str; 5] = ["coeff.f", "coeff.a", "coeff.b", "init.c", "init.y"];

impl RunConfig {
    /// Parses flat key/value pairs on top of the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut preset_params: BTreeMap<&str, Params> = BTreeMap::new();
        for (key, value) in pairs {
            let v = value.trim();
            match key.as_str() {
                "dim" => cfg.dim = num(key, v)?,
                "cells" => cfg.cells = num(key, v)?,
                "T" => cfg.t_final = num(key, v)?,
                "theta" => cfg.theta = num(key, v)?,
                "bc" => cfg.bc = v.parse().map_err(|e| schema(key, e))?,
                "beta" => cfg.beta = Beta::parse(v).map_err(|e| schema(key, e))?,
                "coeff.f" => cfg.f = Preset::named(v),
                "coeff.a" => cfg.a = Preset::named(v),
                "coeff.b" => cfg.b = Preset::named(v),
                "init.c" => cfg.c0 = Preset::named(v),
                "init.y" => cfg.y0 = Preset::named(v),
                "q" => cfg.q = num(key, v)?,
                "n_paths" => cfg.n_paths = num(key, v)?,
                "seed" => cfg.seed = num(key, v)?,
                "snapshot_stride" => cfg.snapshot_stride = Some(num(key, v)?),
                "quad_refine" => cfg.quad_refine = num(key, v)?,
                "workers" => cfg.workers = num(key, v)?,
                "max_dt" => cfg.max_dt = Some(num(key, v)?),
                "n_steps" => cfg.n_steps = Some(num(key, v)?),
                "malliavin.r" => cfg.r_indices = list(key, v)?,
                "lags" => cfg.lags = list(key, v)?,
                "levels" => cfg.levels = list(key, v)?,
                "eps" => cfg.eps = list(key, v)?,
                "weak.tests" => cfg.weak_tests = num(key, v)?,
                "transform.k_points" => cfg.transform.k_points = num(key, v)?,
                "transform.d_points" => cfg.transform.d_points = num(key, v)?,
                "transform.refine" => cfg.transform.refine = num(key, v)?,
                "transform.phi" => cfg.transform.phi = v.to_string(),
                "transform.scale" => cfg.transform.scale = num(key, v)?,
                "transform.p" => cfg.transform.p = num(key, v)?,
                "out" => cfg.out = PathBuf::from(v),
                other => {
                    let prefix = PRESET_KEYS.iter().find(|p| {
                        other.len() > p.len() + 1
                            && other.starts_with(*p)
                            && other.as_bytes()[p.len()] == b'.'
                    });
                    match prefix {
                        Some(p) => {
                            let param = &other[p.len() + 1..];
                            preset_params
                                .entry(p)
                                .or_default()
                                .insert(param.to_string(), num(key, v)?);
                        }
                        None => return Err(schema(key, "unknown key")),
                    }
                }
            }
        }
        for (prefix, params) in preset_params {
            let slot = match prefix {
                "coeff.f" => &mut cfg.f,
                "coeff.a" => &mut cfg.a,
                "coeff.b" => &mut cfg.b,
                "init.c" => &mut cfg.c0,
                _ => &mut cfg.y0,
            };
            slot.params = params;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        GridSpec::new(self.dim, self.cells).map_err(|e| schema("cells", e))?;
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(schema("theta", format!("{} is not in (0, 1]", self.theta)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(schema(
                "T",
                format!("{} is not a positive horizon", self.t_final),
            ));
        }
        if !(self.q > 2.0) {
            return Err(schema("q", format!("{} is not above 2", self.q)));
        }
        if self.n_paths == 0 {
            return Err(schema("n_paths", "at least one path is needed"));
        }
        if !["one", "capped"].contains(&self.transform.phi.as_str()) {
            return Err(schema("transform.phi", "expected `one` or `capped`"));
        }
        self.coefficients()?;
        self.initial(&self.c0, "init.c")?;
        self.initial(&self.y0, "init.y")?;
        Ok(())
    }

    pub fn coefficients(&self) -> Result<CoefficientSet, CliError> {
        let f = Source::preset(&self.f.name, &self.f.params).map_err(|e| schema("coeff.f", e))?;
        let a =
            Diffusion::preset(&self.a.name, &self.a.params).map_err(|e| schema("coeff.a", e))?;
        let b = Drift::preset(&self.b.name, &self.b.params).map_err(|e| schema("coeff.b", e))?;
        Ok(CoefficientSet::new(self.beta, f, a, b))
    }

    fn initial(&self, p: &Preset, key: &str) -> Result<InitialData, CliError> {
        InitialData::preset(&p.name, &p.params).map_err(|e| schema(key, e))
    }

    /// The simulation part of the configuration.
    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let grid = GridSpec::new(self.dim, self.cells).map_err(|e| schema("cells", e))?;
        let mut sim = SimulationConfig::new(grid, self.coefficients()?);
        sim.bc = self.bc;
        sim.t_final = self.t_final;
        sim.theta = self.theta;
        sim.c0 = self.initial(&self.c0, "init.c")?;
        sim.y0 = self.initial(&self.y0, "init.y")?;
        sim.quad_refine = self.quad_refine;
        sim.snapshot_stride = self.snapshot_stride;
        sim.max_dt = self.max_dt;
        sim.n_steps = self.n_steps;
        sim.workers = self.workers;
        Ok(sim)
    }

    /// Canonical flat form; [`RunConfig::from_pairs`] inverts it.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("dim", self.dim.to_string());
        put("cells", self.cells.to_string());
        put("T", self.t_final.to_string());
        put("theta", self.theta.to_string());
        put("bc", self.bc.as_str().to_string());
        put("beta", self.beta.to_string());
        for (key, p) in PRESET_KEYS
            .iter()
            .zip([&self.f, &self.a, &self.b, &self.c0, &self.y0])
        {
            put(key, p.name.clone());
            for (param, v) in &p.params {
                put(&format!("{key}.{param}"), v.to_string());
            }
        }
        put("q", self.q.to_string());
        put("n_paths", self.n_paths.to_string());
        put("seed", self.seed.to_string());
        if let Some(s) = self.snapshot_stride {
            put("snapshot_stride", s.to_string());
        }
        put("quad_refine", self.quad_refine.to_string());
        put("workers", self.workers.to_string());
        if let Some(d) = self.max_dt {
            put("max_dt", d.to_string());
        }
        if let Some(n) = self.n_steps {
            put("n_steps", n.to_string());
        }
        put("malliavin.r", join(&self.r_indices));
        put("lags", join(&self.lags));
        put("levels", join(&self.levels));
        put("eps", join(&self.eps));
        put("weak.tests", self.weak_tests.to_string());
        put("transform.k_points", self.transform.k_points.to_string());
        put("transform.d_points", self.transform.d_points.to_string());
        put("transform.refine", self.transform.refine.to_string());
        put("transform.phi", self.transform.phi.clone());
        put("transform.scale", self.transform.scale.to_string());
        put("transform.p", self.transform.p.to_string());
        put("out", self.out.display().to_string());
        m
    }
}

/// Splits `key=value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| schema(&format!("line {}", n + 1), "expected key=value"))?;
        let k = k.trim();
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(schema(k, "duplicate key"));
        }
    }
    Ok(out)
}

/// Flattens a JSON object whose values are strings, numbers, booleans or
/// arrays of those (arrays become comma lists).
pub fn parse_json(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema("<json>", e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema("<json>", "top level must be an object"))?;
    let scalar = |k: &str, v: &serde_json::Value| -> Result<String, CliError> {
        match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            _ => Err(schema(k, "expected a scalar")),
        }
    };
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        let s = match v {
            serde_json::Value::Array(xs) => xs
                .iter()
                .map(|x| scalar(k, x))
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
            other => scalar(k, other)?,
        };
        out.insert(k.clone(), s);
    }
    Ok(out)
}

/// Reads a config file in either format.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Missing {
        path: path.to_path_buf(),
        source: e,
    })?;
    let pairs = if text.trim_start().starts_with('{') {
        parse_json(&text)?
    } else {
        parse_key_values(&text)?
    };
    RunConfig::from_pairs(&pairs)
}
