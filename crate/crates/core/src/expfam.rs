//! Continuous exponential families in canonical form
//! `f(y; θ) = h₁(y) · h₂(θ) · exp(Σ ηᵢ(θ) Tᵢ(y))`.
//!
//! Parametrisations used throughout the crate:
//!
//! | family               | params     | support  | T(y)                 |
//! |----------------------|------------|----------|----------------------|
//! | `gaussian`           | (μ, σ)     | ℝ        | (y, y²)              |
//! | `gaussian_fixed_var` | μ (σ = 1)  | ℝ        | y                    |
//! | `gamma`              | (α, β)     | (0, ∞)   | (log y, y)           |
//! | `gamma_fixed_scale`  | β (α = 1)  | (0, ∞)   | y                    |
//! | `exponential`        | rate λ     | (0, ∞)   | y                    |
//! | `pareto`             | θ          | [1, ∞)   | log y                |
//! | `beta`               | (α, β)     | (0, 1)   | (log y, log(1 − y))  |
//!
//! Gamma uses the shape/rate form `β^α / Γ(α) · y^(α−1) · e^(−βy)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::special::norm_cdf;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Distribution family identifier. Serialises to the lowercase ids used by
/// the CLI and in JSON reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "gaussian_fixed_var")]
    GaussianFixedVariance,
    #[serde(rename = "gamma")]
    Gamma,
    /// Gamma whose scale `1/√α` (coefficient of variation) is held at one,
    /// leaving the rate free.
    #[serde(rename = "gamma_fixed_scale")]
    GammaFixedScale,
    #[serde(rename = "exponential")]
    Exponential,
    #[serde(rename = "pareto")]
    Pareto,
    #[serde(rename = "beta")]
    Beta,
}

/// Fixed support of a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    Positive,
    AtLeastOne,
    UnitInterval,
}

impl Support {
    pub fn contains(self, y: f64) -> bool {
        match self {
            Support::Real => y.is_finite(),
            Support::Positive => y > 0.0 && y.is_finite(),
            Support::AtLeastOne => y >= 1.0 && y.is_finite(),
            Support::UnitInterval => y > 0.0 && y < 1.0,
        }
    }

    /// Infimum and supremum of the support.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Support::Real => (f64::NEG_INFINITY, f64::INFINITY),
            Support::Positive => (0.0, f64::INFINITY),
            Support::AtLeastOne => (1.0, f64::INFINITY),
            Support::UnitInterval => (0.0, 1.0),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Support::Real => "(-inf, inf)",
            Support::Positive => "(0, inf)",
            Support::AtLeastOne => "[1, inf)",
            Support::UnitInterval => "(0, 1)",
        }
    }
}

/// Open domain of a single parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamDomain {
    Real,
    Positive,
}

impl ParamDomain {
    pub fn contains(self, v: f64) -> bool {
        match self {
            ParamDomain::Real => v.is_finite(),
            ParamDomain::Positive => v > 0.0 && v.is_finite(),
        }
    }

    fn describe(self) -> &'static str {
        match self {
            ParamDomain::Real => "(-inf, inf)",
            ParamDomain::Positive => "(0, inf)",
        }
    }
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Gaussian,
        Family::GaussianFixedVariance,
        Family::Gamma,
        Family::GammaFixedScale,
        Family::Exponential,
        Family::Pareto,
        Family::Beta,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::GaussianFixedVariance => "gaussian_fixed_var",
            Family::Gamma => "gamma",
            Family::GammaFixedScale => "gamma_fixed_scale",
            Family::Exponential => "exponential",
            Family::Pareto => "pareto",
            Family::Beta => "beta",
        }
    }

    /// Number of free parameters.
    pub fn q(self) -> usize {
        match self {
            Family::Gaussian | Family::Gamma | Family::Beta => 2,
            _ => 1,
        }
    }

    pub fn support(self) -> Support {
        match self {
            Family::Gaussian | Family::GaussianFixedVariance => Support::Real,
            Family::Gamma | Family::GammaFixedScale | Family::Exponential => Support::Positive,
            Family::Pareto => Support::AtLeastOne,
            Family::Beta => Support::UnitInterval,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Gaussian => &["mu", "sigma"],
            Family::GaussianFixedVariance => &["mu"],
            Family::Gamma => &["alpha", "beta"],
            Family::GammaFixedScale => &["beta"],
            Family::Exponential => &["rate"],
            Family::Pareto => &["theta"],
            Family::Beta => &["alpha", "beta"],
        }
    }

    pub fn param_domain(self, k: usize) -> ParamDomain {
        match (self, k) {
            (Family::Gaussian, 0) | (Family::GaussianFixedVariance, 0) => ParamDomain::Real,
            _ => ParamDomain::Positive,
        }
    }

    pub fn in_support(self, y: f64) -> bool {
        self.support().contains(y)
    }

    pub(crate) fn check_support(self, y: f64) -> Result<()> {
        if self.in_support(y) {
            Ok(())
        } else {
            Err(Error::Support { family: self.id(), value: y, support: self.support().describe() })
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.iter().copied().find(|f| f.id() == s).ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// A validated parameter vector (at most two components).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamVector {
    family: Family,
    vals: [f64; 2],
}

impl ParamVector {
    pub fn new(family: Family, values: &[f64]) -> Result<Self> {
        let q = family.q();
        if values.len() != q {
            return Err(Error::ParamCount { expected: q, got: values.len() });
        }
        for (k, &v) in values.iter().enumerate() {
            let dom = family.param_domain(k);
            if !dom.contains(v) {
                return Err(Error::ParamDomain { name: family.param_names()[k], value: v, domain: dom.describe() });
            }
        }
        Ok(Self::from_raw(family, values))
    }

    pub(crate) fn from_raw(family: Family, values: &[f64]) -> Self {
        let mut vals = [0.0; 2];
        vals[..values.len()].copy_from_slice(values);
        ParamVector { family, vals }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.vals[..self.family.q()]
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values()[k]
    }
}

impl Serialize for ParamVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values().serialize(s)
    }
}

/// Sufficient statistics T(y), one entry per free parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuffStats {
    vals: [f64; 2],
    len: usize,
}

impl SuffStats {
    pub fn values(&self) -> &[f64] {
        &self.vals[..self.len]
    }
}

/// Log density with the parameters passed as a raw slice; `-inf` outside the
/// support. Callers guarantee the parameters are in-domain.
pub(crate) fn log_density_raw(family: Family, p: &[f64], y: f64) -> f64 {
    if !family.in_support(y) {
        return f64::NEG_INFINITY;
    }
    match family {
        Family::Gaussian => {
            let z = (y - p[0]) / p[1];
            -LN_SQRT_2PI - p[1].ln() - 0.5 * z * z
        }
        Family::GaussianFixedVariance => {
            let z = y - p[0];
            -LN_SQRT_2PI - 0.5 * z * z
        }
        Family::Gamma => {
            let (a, b) = (p[0], p[1]);
            a * b.ln() - ln_gamma(a) + (a - 1.0) * y.ln() - b * y
        }
        Family::GammaFixedScale | Family::Exponential => p[0].ln() - p[0] * y,
        Family::Pareto => p[0].ln() - (p[0] + 1.0) * y.ln(),
        Family::Beta => {
            let (a, b) = (p[0], p[1]);
            -ln_beta(a, b) + (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p()
        }
    }
}

pub(crate) fn cdf_raw(family: Family, p: &[f64], y: f64) -> f64 {
    if y.is_nan() {
        return f64::NAN;
    }
    match family {
        Family::Gaussian => norm_cdf((y - p[0]) / p[1]),
        Family::GaussianFixedVariance => norm_cdf(y - p[0]),
        Family::Gamma => {
            if y <= 0.0 {
                0.0
            } else if y == f64::INFINITY {
                1.0
            } else {
                gamma_lr(p[0], p[1] * y)
            }
        }
        Family::GammaFixedScale | Family::Exponential => {
            if y <= 0.0 {
                0.0
            } else {
                -(-p[0] * y).exp_m1()
            }
        }
        Family::Pareto => {
            if y <= 1.0 {
                0.0
            } else {
                -(-p[0] * y.ln()).exp_m1()
            }
        }
        Family::Beta => {
            if y <= 0.0 {
                0.0
            } else if y >= 1.0 {
                1.0
            } else {
                beta_reg(p[0], p[1], y)
            }
        }
    }
}

pub(crate) fn quantile_raw(family: Family, p: &[f64], u: f64) -> f64 {
    match family {
        Family::Exponential | Family::GammaFixedScale => -(-u).ln_1p() / p[0],
        Family::Pareto => (-(-u).ln_1p() / p[0]).exp(),
        Family::Gaussian | Family::GaussianFixedVariance => {
            let (mu, sigma) = if family == Family::Gaussian { (p[0], p[1]) } else { (p[0], 1.0) };
            let z0 = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u);
            let width = 10.0 * sigma;
            let start = mu + sigma * z0;
            let (lo, hi) = bracket(family, p, u, start - width, start + width, f64::NEG_INFINITY);
            refine(family, p, u, lo, hi, start)
        }
        Family::Gamma => {
            let (a, b) = (p[0], p[1]);
            // Wilson–Hilferty starting point
            let z = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u);
            let c = 1.0 / (9.0 * a);
            let wh = a * (1.0 - c + z * c.sqrt()).powi(3);
            let start = if wh > 0.0 && wh.is_finite() { wh / b } else { a / b };
            let (lo, hi) = bracket(family, p, u, 0.0, (a / b).max(start) * 2.0 + 1.0 / b, 0.0);
            refine(family, p, u, lo, hi, start)
        }
        Family::Beta => {
            let mean = p[0] / (p[0] + p[1]);
            refine(family, p, u, 0.0, 1.0, mean)
        }
    }
}

/// Widen `[lo, hi]` until it brackets the `u`-quantile; `floor` bounds `lo`.
fn bracket(family: Family, p: &[f64], u: f64, mut lo: f64, mut hi: f64, floor: f64) -> (f64, f64) {
    let mut step = (hi - lo).max(1.0);
    while cdf_raw(family, p, hi) < u && hi.is_finite() {
        lo = lo.max(hi);
        hi += step;
        step *= 2.0;
    }
    let mut step = (hi - lo).max(1.0);
    while lo > floor && cdf_raw(family, p, lo) > u {
        hi = hi.min(lo);
        lo = (lo - step).max(floor);
        step *= 2.0;
    }
    (lo, hi)
}

/// Safeguarded Newton iteration on `cdf(x) = u` inside a bracket.
fn refine(family: Family, p: &[f64], u: f64, mut lo: f64, mut hi: f64, start: f64) -> f64 {
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..400 {
        let f = cdf_raw(family, p, x) - u;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = log_density_raw(family, p, x).exp();
        let mut next = x - f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Accepts a parameter vector built for another family only when it is also
/// valid for `family`.
fn check_family(family: Family, params: &ParamVector) -> Result<()> {
    if params.family == family {
        Ok(())
    } else {
        ParamVector::new(family, params.values()).map(|_| ())
    }
}

/// Density `f(y; θ)`, zero outside the support.
pub fn density(family: Family, params: &ParamVector, y: f64) -> Result<f64> {
    check_family(family, params)?;
    Ok(log_density_raw(family, params.values(), y).exp())
}

pub fn log_density(family: Family, params: &ParamVector, y: f64) -> Result<f64> {
    check_family(family, params)?;
    Ok(log_density_raw(family, params.values(), y))
}

/// Distribution function; 0 below the support and 1 above it.
pub fn cdf(family: Family, params: &ParamVector, y: f64) -> Result<f64> {
    check_family(family, params)?;
    Ok(cdf_raw(family, params.values(), y))
}

/// Inverse distribution function for `u ∈ (0, 1)`.
pub fn quantile(family: Family, params: &ParamVector, u: f64) -> Result<f64> {
    check_family(family, params)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Probability(u));
    }
    Ok(quantile_raw(family, params.values(), u))
}

pub fn sufficient_stats(family: Family, y: f64) -> Result<SuffStats> {
    family.check_support(y)?;
    let (vals, len) = match family {
        Family::Gaussian => ([y, y * y], 2),
        Family::GaussianFixedVariance | Family::Exponential | Family::GammaFixedScale => ([y, 0.0], 1),
        Family::Gamma => ([y.ln(), y], 2),
        Family::Pareto => ([y.ln(), 0.0], 1),
        Family::Beta => ([y.ln(), (-y).ln_1p()], 2),
    };
    Ok(SuffStats { vals, len })
}

/// Natural parameters η(θ) pairing with [`sufficient_stats`].
pub fn natural_params(family: Family, params: &ParamVector) -> Result<SuffStats> {
    check_family(family, params)?;
    let p = params.values();
    let (vals, len) = match family {
        Family::Gaussian => {
            let s2 = p[1] * p[1];
            ([p[0] / s2, -0.5 / s2], 2)
        }
        Family::GaussianFixedVariance => ([p[0], 0.0], 1),
        Family::Gamma => ([p[0], -p[1]], 2),
        Family::Exponential | Family::GammaFixedScale => ([-p[0], 0.0], 1),
        Family::Pareto => ([-p[0], 0.0], 1),
        Family::Beta => ([p[0], p[1]], 2),
    };
    Ok(SuffStats { vals, len })
}

/// log h₁(y), the base measure (−∞ outside the support).
pub fn log_base_measure(family: Family, y: f64) -> f64 {
    if !family.in_support(y) {
        return f64::NEG_INFINITY;
    }
    match family {
        Family::Gaussian => -LN_SQRT_2PI,
        Family::GaussianFixedVariance => -LN_SQRT_2PI - 0.5 * y * y,
        Family::Gamma | Family::Pareto => -y.ln(),
        Family::Exponential | Family::GammaFixedScale => 0.0,
        Family::Beta => -y.ln() - (-y).ln_1p(),
    }
}

/// log h₂(θ), the normalising function.
pub fn log_normalizer(family: Family, params: &ParamVector) -> Result<f64> {
    check_family(family, params)?;
    let p = params.values();
    Ok(match family {
        Family::Gaussian => -0.5 * (p[0] / p[1]).powi(2) - p[1].ln(),
        Family::GaussianFixedVariance => -0.5 * p[0] * p[0],
        Family::Gamma => p[0] * p[1].ln() - ln_gamma(p[0]),
        Family::Exponential | Family::GammaFixedScale | Family::Pareto => p[0].ln(),
        Family::Beta => -ln_beta(p[0], p[1]),
    })
}

/// Result of [`log_likelihood`]. `degenerate` flags an observation with zero
/// density, in which case `value` is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLikelihood {
    pub value: f64,
    pub degenerate: bool,
}

pub fn log_likelihood(family: Family, params_per_obs: &[ParamVector], y: &[f64]) -> Result<LogLikelihood> {
    if params_per_obs.len() != y.len() {
        return Err(Error::LengthMismatch(params_per_obs.len(), y.len()));
    }
    let mut value = 0.0;
    let mut degenerate = false;
    for (p, &yi) in params_per_obs.iter().zip(y) {
        family.check_support(yi)?;
        let l = log_density(family, p, yi)?;
        if l == f64::NEG_INFINITY {
            degenerate = true;
        }
        value += l;
    }
    Ok(LogLikelihood { value: if degenerate { f64::NEG_INFINITY } else { value }, degenerate })
}

/// Constant in-domain parameter estimate from a marginal sample (moments,
/// or the closed-form MLE for Pareto and Exponential).
pub fn moment_estimate(family: Family, y: &[f64]) -> Result<ParamVector> {
    if y.len() < 2 {
        return Err(Error::Precondition("need at least two observations".into()));
    }
    for &v in y {
        family.check_support(v)?;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).max(1e-12);
    let vals: Vec<f64> = match family {
        Family::Gaussian => vec![mean, var.sqrt()],
        Family::GaussianFixedVariance => vec![mean],
        Family::Gamma => vec![mean * mean / var, mean / var],
        Family::Exponential | Family::GammaFixedScale => vec![1.0 / mean],
        Family::Pareto => {
            let ml = y.iter().map(|v| v.ln()).sum::<f64>() / n;
            vec![1.0 / ml.max(1e-12)]
        }
        Family::Beta => {
            let common = mean * (1.0 - mean) / var - 1.0;
            if common > 0.0 {
                vec![mean * common, (1.0 - mean) * common]
            } else {
                vec![1.0, 1.0]
            }
        }
    };
    ParamVector::new(family, &vals)
}
