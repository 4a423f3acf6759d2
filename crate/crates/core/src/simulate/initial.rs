use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::model::Params;
use crate::{Error, Result};

/// Initial profile for `c₀` or `y₀`, evaluated pointwise and then projected
/// onto the grid.
#[derive(Clone)]
pub enum InitialData {
    Zero,
    Constant(f64),
    /// `amplitude · ∏ sin(π xᵢ)`, zero on `∂O`.
    Sine {
        amplitude: f64,
    },
    /// `offset + amplitude · ∏ cos(π xᵢ)`, zero normal derivative on `∂O`.
    Cosine {
        offset: f64,
        amplitude: f64,
    },
    /// `U(x, t₀)^m` for the Barenblatt profile `U` centred at the midpoint.
    Barenblatt {
        m: f64,
        constant: f64,
        t0: f64,
    },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "Zero"),
            InitialData::Constant(v) => write!(f, "Constant({v})"),
            InitialData::Sine { amplitude } => write!(f, "Sine {{ amplitude: {amplitude} }}"),
            InitialData::Cosine { offset, amplitude } => {
                write!(f, "Cosine {{ offset: {offset}, amplitude: {amplitude} }}")
            }
            InitialData::Barenblatt { m, constant, t0 } => {
                write!(f, "Barenblatt {{ m: {m}, constant: {constant}, t0: {t0} }}")
            }
            InitialData::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl InitialData {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Constant(v) => *v,
            InitialData::Sine { amplitude } => {
                amplitude * x.iter().map(|&xi| (PI * xi).sin()).product::<f64>()
            }
            InitialData::Cosine { offset, amplitude } => {
                offset + amplitude * x.iter().map(|&xi| (PI * xi).cos()).product::<f64>()
            }
            InitialData::Barenblatt { m, constant, t0 } => {
                barenblatt_profile(x, *t0, *m, *constant).powf(*m)
            }
            InitialData::Custom(g) => g(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialData::Zero => "zero",
            InitialData::Constant(_) => "constant",
            InitialData::Sine { .. } => "sine",
            InitialData::Cosine { .. } => "cosine",
            InitialData::Barenblatt { .. } => "barenblatt",
            InitialData::Custom(_) => "custom",
        }
    }

    pub fn params(&self) -> Params {
        let p = |pairs: &[(&str, f64)]| pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        match *self {
            InitialData::Constant(v) => p(&[("value", v)]),
            InitialData::Sine { amplitude } => p(&[("amplitude", amplitude)]),
            InitialData::Cosine { offset, amplitude } => {
                p(&[("offset", offset), ("amplitude", amplitude)])
            }
            InitialData::Barenblatt { m, constant, t0 } => {
                p(&[("m", m), ("C", constant), ("t0", t0)])
            }
            _ => Params::new(),
        }
    }

    /// Named profile with parameters; unknown names or parameters are
    /// rejected, as are profiles that can turn negative.
    pub fn preset(name: &str, params: &Params) -> Result<Self> {
        let allowed: &[&str] = match name {
            "zero" => &[],
            "constant" => &["value"],
            "sine" => &["amplitude"],
            "cosine" => &["offset", "amplitude"],
            "barenblatt" => &["m", "C", "t0"],
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "initial profile `{name}` has no parameter `{k}`"
            )));
        }
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let data = match name {
            "zero" => InitialData::Zero,
            "constant" => InitialData::Constant(get("value", 1.0)),
            "sine" => InitialData::Sine {
                amplitude: get("amplitude", 1.0),
            },
            "cosine" => InitialData::Cosine {
                offset: get("offset", 1.0),
                amplitude: get("amplitude", 0.5),
            },
            _ => InitialData::Barenblatt {
                m: get("m", 2.0),
                constant: get("C", 0.01),
                t0: get("t0", 1.0),
            },
        };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("initial profile: {what}")));
        match *self {
            InitialData::Constant(v) if !(v >= 0.0) || !v.is_finite() => bad("negative constant"),
            InitialData::Sine { amplitude } if !(amplitude >= 0.0) || !amplitude.is_finite() => {
                bad("negative sine amplitude")
            }
            InitialData::Cosine { offset, amplitude }
                if !(offset >= amplitude.abs())
                    || !offset.is_finite()
                    || !amplitude.is_finite() =>
            {
                bad("cosine offset below amplitude")
            }
            InitialData::Barenblatt { m, constant, t0 }
                if !(m > 1.0) || !(constant > 0.0) || !(t0 > 0.0) =>
            {
                bad("Barenblatt needs m > 1, C > 0, t0 > 0")
            }
            _ => Ok(()),
        }
    }
}

/// Exponents `(α, k)` of the Barenblatt profile in dimension `dim`.
fn barenblatt_exponents(m: f64, dim: usize) -> (f64, f64) {
    let n = dim as f64;
    let alpha = n / (n * (m - 1.0) + 2.0);
    let k = alpha * (m - 1.0) / (2.0 * m * n);
    (alpha, k)
}

/// Barenblatt solution `U` of `∂_t U = ΔU^m` centred at the cube midpoint:
/// `U = t^{−α}(C − k|x − ½|² t^{−2α/N})₊^{1/(m−1)}`.
pub fn barenblatt_profile(x: &[f64], t: f64, m: f64, constant: f64) -> f64 {
    let (alpha, k) = barenblatt_exponents(m, x.len());
    let r2: f64 = x.iter().map(|&xi| (xi - 0.5) * (xi - 0.5)).sum();
    let inner = constant - k * r2 * t.powf(-2.0 * alpha / x.len() as f64);
    t.powf(-alpha) * inner.max(0.0).powf(1.0 / (m - 1.0))
}

/// Radius of the support of the Barenblatt profile at time `t`.
pub fn barenblatt_support_radius(t: f64, m: f64, constant: f64, dim: usize) -> f64 {
    let (alpha, k) = barenblatt_exponents(m, dim);
    (constant / k).sqrt() * t.powf(alpha / dim as f64)
}
