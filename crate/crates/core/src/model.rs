//! Coefficients of the coupled system, the sampled assumption checks, the
//! a priori bound `R₂` and the regularised nonlinearity `β_ε`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Named real parameters of a coefficient preset.
pub type Params = BTreeMap<String, f64>;

/// The nonlinearity `β` of `∂_t β(c) = Δc + f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    /// `β(c) = c^{1/m}`.
    Pme { m: f64 },
    /// `β_ε(c) = (c + ε)^{1/m} − ε^{1/m}`.
    Regularized { m: f64, eps: f64 },
}

/// `β(c) = c^{1/m}` for `m > 1`.
pub fn pme_beta(m: f64) -> Result<Beta> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "PME exponent must exceed 1, got {m}"
        )));
    }
    Ok(Beta::Pme { m })
}

/// `β_ε(c) = (c + ε)^{1/m} − ε^{1/m}` for `m > 1`, `ε ∈ (0, 1)`.
pub fn regularize_beta(m: f64, eps: f64) -> Result<Beta> {
    pme_beta(m)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange {
            what: "eps",
            value: eps,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(Beta::Regularized { m, eps })
}

impl Beta {
    /// Parses `pme:m` or `regularized:m:eps`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number `{s}` in beta `{spec}`")))
        };
        match parts.as_slice() {
            ["pme", m] => pme_beta(num(m)?),
            ["regularized", m, eps] => regularize_beta(num(m)?, num(eps)?),
            _ => Err(Error::InvalidParameter(format!(
                "beta `{spec}` (expected pme:m or regularized:m:eps)"
            ))),
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            Beta::Pme { m } | Beta::Regularized { m, .. } => m,
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            Beta::Pme { .. } => None,
            Beta::Regularized { eps, .. } => Some(eps),
        }
    }

    /// True when `β′(0)` is infinite.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Beta::Pme { .. })
    }

    #[inline]
    pub fn value(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match *self {
            Beta::Pme { m } => c.powf(1.0 / m),
            Beta::Regularized { m, eps } => (c + eps).powf(1.0 / m) - eps.powf(1.0 / m),
        }
    }

    /// `β′(c)`; infinite at `c = 0` for the degenerate family.
    #[inline]
    pub fn prime(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match *self {
            Beta::Pme { m } => {
                if c == 0.0 {
                    f64::INFINITY
                } else {
                    c.powf(1.0 / m - 1.0) / m
                }
            }
            Beta::Regularized { m, eps } => (c + eps).powf(1.0 / m - 1.0) / m,
        }
    }

    /// `β⁻¹(v)` for `v ≥ 0`.
    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        match *self {
            Beta::Pme { m } => v.powf(m),
            Beta::Regularized { m, eps } => ((v + eps.powf(1.0 / m)).powf(m) - eps).max(0.0),
        }
    }

    /// `1/β′(c)`, bounded on compacts and zero at `c = 0` for the
    /// degenerate family.
    #[inline]
    pub fn reciprocal_prime(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match *self {
            Beta::Pme { m } => m * c.powf(1.0 - 1.0 / m),
            Beta::Regularized { m, eps } => m * (c + eps).powf(1.0 - 1.0 / m),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Pme { m } => write!(f, "pme:{m}"),
            Beta::Regularized { m, eps } => write!(f, "regularized:{m}:{eps}"),
        }
    }
}

/// `sup_{[0, c_max]} |β₁ − β₂|` on `samples + 1` equispaced points.
pub fn beta_sup_distance(a: &Beta, b: &Beta, c_max: f64, samples: usize) -> f64 {
    let n = samples.max(1);
    (0..=n)
        .map(|i| {
            let c = c_max * i as f64 / n as f64;
            (a.value(c) - b.value(c)).abs()
        })
        .fold(0.0, f64::max)
}

type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied function of `(c, y)` with its two partial derivatives.
#[derive(Clone)]
pub struct Custom2 {
    pub value: Fn2,
    pub d_c: Fn2,
    pub d_y: Fn2,
}

/// A user-supplied function of `y` with its derivative.
#[derive(Clone)]
pub struct Custom1 {
    pub value: Fn1,
    pub derivative: Fn1,
}

impl fmt::Debug for Custom2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Custom2")
    }
}

impl fmt::Debug for Custom1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Custom1")
    }
}

/// Source term `f(c, y)` of the PDE.
#[derive(Debug, Clone)]
pub enum Source {
    Zero,
    /// `λ c (1 − c/K) e^{−μ_y y}`.
    Logistic {
        lambda: f64,
        capacity: f64,
        mu_y: f64,
    },
    Custom(Custom2),
}

/// Diffusion coefficient `a(y)` of the SDE.
#[derive(Debug, Clone)]
pub enum Diffusion {
    Zero,
    /// `σ y`.
    Linear {
        sigma: f64,
    },
    /// `σ y / (1 + y)`.
    Saturating {
        sigma: f64,
    },
    Custom(Custom1),
}

/// Drift `b(c, y)` of the SDE.
#[derive(Debug, Clone)]
pub enum Drift {
    Zero,
    /// `κ c − ρ y`.
    Coupling {
        kappa: f64,
        rho: f64,
    },
    Custom(Custom2),
}

impl Source {
    #[inline]
    pub fn value(&self, c: f64, y: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Logistic {
                lambda,
                capacity,
                mu_y,
            } => lambda * c * (1.0 - c / capacity) * (-mu_y * y).exp(),
            Source::Custom(g) => (g.value)(c, y),
        }
    }

    #[inline]
    pub fn d_c(&self, c: f64, y: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Logistic {
                lambda,
                capacity,
                mu_y,
            } => lambda * (1.0 - 2.0 * c / capacity) * (-mu_y * y).exp(),
            Source::Custom(g) => (g.d_c)(c, y),
        }
    }

    #[inline]
    pub fn d_y(&self, c: f64, y: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Logistic { mu_y, .. } => -mu_y * self.value(c, y),
            Source::Custom(g) => (g.d_y)(c, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Source::Zero => "zero",
            Source::Logistic { .. } => "logistic_f",
            Source::Custom(_) => "custom",
        }
    }

    pub fn params(&self) -> Params {
        match *self {
            Source::Logistic {
                lambda,
                capacity,
                mu_y,
            } => params(&[("lambda", lambda), ("K", capacity), ("mu_y", mu_y)]),
            _ => Params::new(),
        }
    }

    /// `zero` or `logistic_f` (parameters `lambda`, `K`, `mu_y`).
    pub fn preset(name: &str, p: &Params) -> Result<Self> {
        match name {
            "zero" => {
                reject_unknown(name, p, &[])?;
                Ok(Source::Zero)
            }
            "logistic_f" => {
                reject_unknown(name, p, &["lambda", "K", "mu_y"])?;
                let lambda = get(p, "lambda", 1.0);
                let capacity = get(p, "K", 1.0);
                let mu_y = get(p, "mu_y", 0.0);
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(invalid(name, "lambda", lambda));
                }
                if !(capacity > 0.0) || !capacity.is_finite() {
                    return Err(invalid(name, "K", capacity));
                }
                if !mu_y.is_finite() || mu_y < 0.0 {
                    return Err(invalid(name, "mu_y", mu_y));
                }
                Ok(Source::Logistic {
                    lambda,
                    capacity,
                    mu_y,
                })
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl Diffusion {
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Linear { sigma } => sigma * y,
            Diffusion::Saturating { sigma } => sigma * y / (1.0 + y),
            Diffusion::Custom(g) => (g.value)(y),
        }
    }

    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Linear { sigma } => *sigma,
            Diffusion::Saturating { sigma } => sigma / ((1.0 + y) * (1.0 + y)),
            Diffusion::Custom(g) => (g.derivative)(y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Zero)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Diffusion::Zero => "zero",
            Diffusion::Linear { .. } => "linear_a",
            Diffusion::Saturating { .. } => "saturating_a",
            Diffusion::Custom(_) => "custom",
        }
    }

    pub fn params(&self) -> Params {
        match *self {
            Diffusion::Linear { sigma } | Diffusion::Saturating { sigma } => {
                params(&[("sigma", sigma)])
            }
            _ => Params::new(),
        }
    }

    /// `zero`, `linear_a` or `saturating_a` (parameter `sigma`).
    pub fn preset(name: &str, p: &Params) -> Result<Self> {
        match name {
            "zero" => {
                reject_unknown(name, p, &[])?;
                Ok(Diffusion::Zero)
            }
            "linear_a" | "saturating_a" => {
                reject_unknown(name, p, &["sigma"])?;
                let sigma = get(p, "sigma", 0.3);
                if !sigma.is_finite() {
                    return Err(invalid(name, "sigma", sigma));
                }
                Ok(if name == "linear_a" {
                    Diffusion::Linear { sigma }
                } else {
                    Diffusion::Saturating { sigma }
                })
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl Drift {
    #[inline]
    pub fn value(&self, c: f64, y: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Coupling { kappa, rho } => kappa * c - rho * y,
            Drift::Custom(g) => (g.value)(c, y),
        }
    }

    #[inline]
    pub fn d_c(&self, c: f64, y: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Coupling { kappa, .. } => *kappa,
            Drift::Custom(g) => (g.d_c)(c, y),
        }
    }

    #[inline]
    pub fn d_y(&self, c: f64, y: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Coupling { rho, .. } => -rho,
            Drift::Custom(g) => (g.d_y)(c, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Drift::Zero => "zero",
            Drift::Coupling { .. } => "coupling_b",
            Drift::Custom(_) => "custom",
        }
    }

    pub fn params(&self) -> Params {
        match *self {
            Drift::Coupling { kappa, rho } => params(&[("kappa", kappa), ("rho", rho)]),
            _ => Params::new(),
        }
    }

    /// `zero` or `coupling_b` (parameters `kappa`, `rho`).
    pub fn preset(name: &str, p: &Params) -> Result<Self> {
        match name {
            "zero" => {
                reject_unknown(name, p, &[])?;
                Ok(Drift::Zero)
            }
            "coupling_b" => {
                reject_unknown(name, p, &["kappa", "rho"])?;
                let kappa = get(p, "kappa", 1.0);
                let rho = get(p, "rho", 1.0);
                if !kappa.is_finite() || kappa < 0.0 {
                    return Err(invalid(name, "kappa", kappa));
                }
                if !rho.is_finite() || rho < 0.0 {
                    return Err(invalid(name, "rho", rho));
                }
                Ok(Drift::Coupling { kappa, rho })
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn get(p: &Params, key: &str, default: f64) -> f64 {
    p.get(key).copied().unwrap_or(default)
}

fn reject_unknown(preset: &str, p: &Params, allowed: &[&str]) -> Result<()> {
    match p.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidParameter(format!(
            "preset `{preset}` has no parameter `{k}`"
        ))),
        None => Ok(()),
    }
}

fn invalid(preset: &str, key: &str, value: f64) -> Error {
    Error::InvalidParameter(format!(
        "preset `{preset}`: {key} = {value} is not admissible"
    ))
}

/// Every coefficient of the coupled system.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub beta: Beta,
    pub f: Source,
    pub a: Diffusion,
    pub b: Drift,
}

impl Default for CoefficientSet {
    /// `β(c) = √c` and all other coefficients zero.
    fn default() -> Self {
        Self {
            beta: Beta::Pme { m: 2.0 },
            f: Source::Zero,
            a: Diffusion::Zero,
            b: Drift::Zero,
        }
    }
}

impl CoefficientSet {
    pub fn new(beta: Beta, f: Source, a: Diffusion, b: Drift) -> Self {
        Self { beta, f, a, b }
    }

    /// Same coefficients with a different `β`.
    pub fn with_beta(&self, beta: Beta) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }

    /// True when `y` is a deterministic function of time.
    pub fn is_noise_free(&self) -> bool {
        self.a.is_zero()
    }
}

/// The default coefficient set with the named preset installed in the
/// slot it belongs to. `zero` leaves every slot at zero.
pub fn preset_coefficients(name: &str, p: &Params) -> Result<CoefficientSet> {
    let mut set = CoefficientSet::default();
    match name {
        "zero" => {
            reject_unknown(name, p, &[])?;
        }
        "logistic_f" => set.f = Source::preset(name, p)?,
        "linear_a" | "saturating_a" => set.a = Diffusion::preset(name, p)?,
        "coupling_b" => set.b = Drift::preset(name, p)?,
        other => return Err(Error::UnknownPreset(other.to_string())),
    }
    Ok(set)
}

/// `R₂(T, R₀) = β⁻¹(e^{T R₀}(β(R₀) + 1) − 1)`.
pub fn r2_bound(t_final: f64, r0: f64, beta: &Beta) -> f64 {
    beta.inverse((t_final * r0).exp() * (beta.value(r0) + 1.0) - 1.0)
}

/// Sampled `sup f(c, y)/(β(c) + 1)` over `[0, c_max] × [0, y_max]`, with its
/// arg-max.
pub fn source_growth(
    coeffs: &CoefficientSet,
    c_max: f64,
    y_max: f64,
    density: usize,
) -> (f64, [f64; 2]) {
    let n = density.max(1);
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for i in 0..=n {
        let c = c_max * i as f64 / n as f64;
        let denom = coeffs.beta.value(c) + 1.0;
        for j in 0..=n {
            let y = y_max * j as f64 / n as f64;
            let q = coeffs.f.value(c, y) / denom;
            if q > best.0 {
                best = (q, [c, y]);
            }
        }
    }
    best
}

/// Structural constants and radii against which coefficients are checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionProfile {
    /// Hölder exponent of `1/β′` is `1 − 1/m1`.
    pub m1: f64,
    /// Growth exponent in `c^{1 − 1/m2} β′(c) ≤ μ`.
    pub m2: f64,
    /// Range `(0, M]` of the growth condition.
    pub m_bound: f64,
    pub mu: f64,
    pub r0: f64,
    pub r1: f64,
    /// Upper end of the sampled `y` range.
    pub y_max: f64,
}

impl AssumptionProfile {
    /// The natural profile of `β(c) = c^{1/m}`: `m1 = m2 = m`, `μ = 1/m`.
    pub fn for_beta(beta: &Beta, r0: f64, r1: f64) -> Self {
        let m = beta.exponent();
        Self {
            m1: m,
            m2: m,
            m_bound: 1.0,
            mu: 1.0 / m,
            r0,
            r1,
            y_max: 10.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.m1 > 1.0
            && self.m2 >= 1.0
            && self.m_bound > 0.0
            && self.mu > 0.0
            && self.r0 > 0.0
            && self.r1 > 0.0
            && self.y_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "assumption profile {self:?}"
            )))
        }
    }
}

/// Norms of the initial data that enter the parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSummary {
    pub c0_sup: f64,
    /// `‖(c₀, y₀)‖_{H¹}`.
    pub h1_norm: f64,
}

/// Outcome of one sampled condition.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub bound: Option<f64>,
    /// Sample point at which `measured` was attained.
    pub argmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub r2: f64,
    /// Structural conditions on the coefficients.
    pub checks: Vec<AssumptionCheck>,
    /// Radius conditions of the parameter set `P(T, R)`.
    pub membership: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn in_parameter_set(&self) -> bool {
        self.all_passed() && self.membership.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks
            .iter()
            .chain(&self.membership)
            .find(|c| c.name == name)
    }
}

fn check(
    name: &'static str,
    measured: f64,
    bound: Option<f64>,
    argmax: Vec<f64>,
    passed: bool,
) -> AssumptionCheck {
    AssumptionCheck {
        name,
        passed,
        measured,
        bound,
        argmax,
    }
}

fn upper(name: &'static str, measured: f64, bound: f64, argmax: Vec<f64>) -> AssumptionCheck {
    let passed = measured.is_finite() && measured <= bound * (1.0 + 1e-12);
    check(name, measured, Some(bound), argmax, passed)
}

fn finite(name: &'static str, measured: f64, argmax: Vec<f64>) -> AssumptionCheck {
    check(name, measured, None, argmax, measured.is_finite())
}

/// Running arg-max helper.
struct Sup {
    value: f64,
    at: Vec<f64>,
}

impl Sup {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            at: Vec::new(),
        }
    }

    fn offer(&mut self, v: f64, at: &[f64]) {
        if v > self.value || v.is_nan() && !self.value.is_nan() {
            self.value = v;
            self.at = at.to_vec();
        }
    }
}

/// Sampled Hölder norm `sup|g| + sup |g(x) − g(y)|/|x − y|^α` over `points`.
fn holder_norm(g: impl Fn(f64) -> f64, points: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let values: Vec<f64> = points.iter().map(|&x| g(x)).collect();
    let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut semi = Sup::new();
    semi.offer(0.0, &[0.0, 0.0]);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[j] - points[i]).abs();
            if d > 0.0 {
                let q = (values[j] - values[i]).abs() / d.powf(alpha);
                semi.offer(q, &[points[i], points[j]]);
            }
        }
    }
    (sup + semi.value, semi.at)
}

/// Samples every structural condition on the coefficients over
/// `c ∈ [0, R₂(T, R₀)]`, `y ∈ [0, y_max]` with `density` points per axis,
/// and the radius conditions of the parameter set.
pub fn validate_assumptions(
    coeffs: &CoefficientSet,
    profile: &AssumptionProfile,
    t_final: f64,
    density: usize,
    initial: Option<InitialSummary>,
) -> Result<AssumptionReport> {
    profile.validate()?;
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon T = {t_final}")));
    }
    let n = density.max(2);
    let beta = &coeffs.beta;
    let r2 = r2_bound(t_final, profile.r0, beta);
    let cs: Vec<f64> = (0..=n).map(|i| r2 * i as f64 / n as f64).collect();
    let ys: Vec<f64> = (0..=n)
        .map(|j| profile.y_max * j as f64 / n as f64)
        .collect();
    // Geometric grid resolves the behaviour of β′ near the degeneracy.
    let geometric: Vec<f64> = (0..=n)
        .map(|i| r2 * 10f64.powf(-12.0 * (1.0 - i as f64 / n as f64)))
        .collect();
    let mut checks = Vec::new();
    let mut membership = Vec::new();

    // β(0) = 0 and β⁻¹ ∘ β = id.
    let mut inv_err = Sup::new();
    inv_err.offer(beta.value(0.0).abs(), &[0.0]);
    for &c in cs.iter().chain(&geometric) {
        let e = (beta.inverse(beta.value(c)) - c).abs() / c.max(1.0);
        inv_err.offer(e, &[c]);
    }
    checks.push(upper("beta_invertible", inv_err.value, 1e-10, inv_err.at));

    // β′ > 0 and β strictly increasing on the sample.
    let mut min_prime = (f64::INFINITY, 0.0);
    let mut increasing = true;
    for w in geometric.windows(2).chain(cs.windows(2)) {
        if !(beta.value(w[1]) > beta.value(w[0])) && w[1] > w[0] {
            increasing = false;
        }
        let p = beta.prime(w[1]);
        if p < min_prime.0 {
            min_prime = (p, w[1]);
        }
    }
    checks.push(check(
        "beta_increasing",
        min_prime.0,
        None,
        vec![min_prime.1],
        increasing && min_prime.0 > 0.0,
    ));

    // β′ nonincreasing.
    let mut rise = Sup::new();
    rise.offer(0.0, &[0.0]);
    for w in geometric.windows(2).chain(cs[1..].windows(2)) {
        rise.offer(beta.prime(w[1]) - beta.prime(w[0]), &[w[1]]);
    }
    checks.push(upper("beta_prime_decreasing", rise.value, 0.0, rise.at));

    // 1/β′ Hölder continuous with exponent 1 − 1/m1.
    let alpha = 1.0 - 1.0 / profile.m1;
    let mut holder_pts: Vec<f64> = cs.iter().step_by((n / 400).max(1)).copied().collect();
    holder_pts.extend(geometric.iter().step_by((n / 200).max(1)));
    holder_pts.sort_by(f64::total_cmp);
    holder_pts.dedup();
    let (holder, holder_at) = holder_norm(|c| beta.reciprocal_prime(c), &holder_pts, alpha);
    checks.push(finite("reciprocal_holder", holder, holder_at.clone()));
    membership.push(upper(
        "reciprocal_holder_radius",
        holder,
        profile.r1,
        holder_at,
    ));

    // c^{1 − 1/m2} β′(c) ≤ μ on (0, M], and ≤ R₁ on (0, R₂].
    let growth_sup = |c_hi: f64| {
        let mut s = Sup::new();
        for i in 0..=n {
            let frac = i as f64 / n as f64;
            for c in [
                c_hi * frac.max(1e-12),
                c_hi * 10f64.powf(-12.0 * (1.0 - frac)),
            ] {
                s.offer(c.powf(1.0 - 1.0 / profile.m2) * beta.prime(c), &[c]);
            }
        }
        s
    };
    let g = growth_sup(profile.m_bound);
    checks.push(upper("beta_growth", g.value, profile.mu, g.at));
    let g = growth_sup(r2);
    membership.push(upper("beta_growth_radius", g.value, profile.r1, g.at));

    // sup f/(β + 1).
    let (c1, c1_at) = source_growth(coeffs, r2, profile.y_max, n);
    checks.push(finite("source_growth", c1, c1_at.to_vec()));
    membership.push(upper(
        "source_growth_radius",
        c1,
        profile.r0,
        c1_at.to_vec(),
    ));

    let mut fp = Sup::new();
    let mut bp = Sup::new();
    let mut f_zero = Sup::new();
    let mut b_zero = Sup::new();
    for &c in &cs {
        for &y in &ys {
            fp.offer(
                coeffs.f.d_c(c, y).abs().max(coeffs.f.d_y(c, y).abs()),
                &[c, y],
            );
            bp.offer(
                coeffs.b.d_c(c, y).abs().max(coeffs.b.d_y(c, y).abs()),
                &[c, y],
            );
        }
        b_zero.offer(-coeffs.b.value(c, 0.0), &[c, 0.0]);
    }
    for &y in &ys {
        f_zero.offer(-coeffs.f.value(0.0, y), &[0.0, y]);
    }
    let mut ap = Sup::new();
    for &y in &ys {
        ap.offer(coeffs.a.derivative(y).abs(), &[y]);
    }
    checks.push(finite("source_partials_bounded", fp.value, fp.at.clone()));
    checks.push(finite(
        "diffusion_derivative_bounded",
        ap.value,
        ap.at.clone(),
    ));
    checks.push(finite("drift_partials_bounded", bp.value, bp.at.clone()));
    checks.push(upper(
        "source_nonnegative_at_zero",
        f_zero.value,
        0.0,
        f_zero.at,
    ));
    let a0 = coeffs.a.value(0.0).abs();
    checks.push(check(
        "diffusion_vanishes_at_zero",
        a0,
        Some(0.0),
        vec![0.0],
        a0 == 0.0,
    ));
    checks.push(upper(
        "drift_nonnegative_at_zero",
        b_zero.value,
        0.0,
        b_zero.at,
    ));

    let partial_sup = fp.value.max(bp.value);
    let partial_at = if fp.value >= bp.value { fp.at } else { bp.at };
    membership.push(upper(
        "partials_radius",
        partial_sup,
        profile.r1,
        partial_at,
    ));
    membership.push(upper(
        "diffusion_derivative_radius",
        ap.value,
        profile.r1,
        ap.at,
    ));
    let b00 = coeffs.b.value(0.0, 0.0);
    membership.push(upper(
        "drift_at_origin_radius",
        b00,
        profile.r1,
        vec![0.0, 0.0],
    ));
    if let Some(init) = initial {
        membership.push(upper("initial_sup_radius", init.c0_sup, profile.r0, vec![]));
        membership.push(upper("initial_h1_radius", init.h1_norm, profile.r1, vec![]));
    }
    Ok(AssumptionReport {
        r2,
        checks,
        membership,
    })
}
