//! Covariate-dependent parameter estimation θ̂(x) by penalised maximum
//! likelihood.
//!
//! Each distribution parameter gets an additive predictor on its link scale,
//! `η_k(x) = Σ_c s_kc(x_c)`, where every `s_kc` is a B-spline in covariate `c`
//! with a second-difference penalty on its coefficients. The penalised
//! log-likelihood is maximised by Newton–Raphson with step halving; smoothing
//! weights are picked per parameter by K-fold cross-validated log-likelihood.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::expfam::{cdf_raw, log_density_raw, moment_estimate, Family, ParamDomain, ParamVector};
use crate::special::{digamma, trigamma};
use crate::spline::{second_difference_penalty, BSplineBasis, BasisRow};

/// Tiny ridge on all coefficients; removes the constant shift shared between
/// additive terms when there are several covariates.
const RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        }
    }

    pub fn apply(self, theta: f64) -> f64 {
        match self {
            Link::Identity => theta,
            Link::Log => theta.ln(),
            Link::Logit => (theta / (1.0 - theta)).ln(),
        }
    }

    /// Link attached to a parameter domain.
    pub fn for_domain(domain: ParamDomain) -> Link {
        match domain {
            ParamDomain::Real => Link::Identity,
            ParamDomain::Positive => Link::Log,
        }
    }
}

pub fn family_links(family: Family) -> Vec<Link> {
    (0..family.q()).map(|k| Link::for_domain(family.param_domain(k))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub basis: BSplineBasis,
    pub coefficients: Vec<f64>,
}

/// Additive smooth for one distribution parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSmooth {
    pub link: Link,
    pub lambda: f64,
    pub terms: Vec<SplineTerm>,
}

/// Fitted covariate-to-parameter map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaModel {
    pub family: Family,
    pub params: Vec<ParamSmooth>,
    pub covariate_ranges: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub final_penalized_loglik: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    pub max_gradient: f64,
    pub effective_df: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Smoothing {
    /// Coordinate-wise search over `grid`, one parameter at a time, scored by
    /// `folds`-fold cross-validated log-likelihood.
    CrossValidated { grid: Vec<f64>, folds: usize },
    /// Fixed weights, one per parameter (a single value is broadcast).
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub degree: usize,
    pub interior_knots: usize,
    pub smoothing: Smoothing,
    pub max_iter: usize,
    pub gradient_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            degree: 3,
            interior_knots: 10,
            smoothing: Smoothing::CrossValidated { grid: (-3..=3).map(|e| 10f64.powi(e)).collect(), folds: 5 },
            max_iter: 100,
            gradient_tol: 1e-6,
        }
    }
}

impl FitOptions {
    /// Unpenalised linear predictor per covariate (degree-1 basis on the
    /// covariate range, no interior knots).
    pub fn linear() -> Self {
        FitOptions { degree: 1, interior_knots: 0, smoothing: Smoothing::Fixed(vec![0.0]), ..FitOptions::default() }
    }
}

fn column_count<C: AsRef<[f64]>>(x: &[C], n: usize) -> Result<()> {
    for c in x {
        if c.as_ref().len() != n {
            return Err(Error::LengthMismatch(c.as_ref().len(), n));
        }
    }
    Ok(())
}

impl ThetaModel {
    pub fn n_covariates(&self) -> usize {
        self.covariate_ranges.len()
    }

    /// A model whose parameters do not depend on the covariates.
    pub fn constant(params: &ParamVector, covariate_ranges: Vec<(f64, f64)>) -> Result<Self> {
        let family = params.family();
        if covariate_ranges.is_empty() {
            return Err(Error::Precondition("need at least one covariate".into()));
        }
        let links = family_links(family);
        let mut out = Vec::new();
        for (k, link) in links.iter().enumerate() {
            let eta = link.apply(params.get(k));
            let terms = covariate_ranges
                .iter()
                .enumerate()
                .map(|(c, &(lo, hi))| {
                    let hi = if hi > lo { hi } else { lo + 1.0 };
                    let basis = BSplineBasis::new(vec![lo, hi], 1)?;
                    let v = if c == 0 { eta } else { 0.0 };
                    Ok(SplineTerm { coefficients: vec![v; basis.len()], basis })
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(ParamSmooth { link: *link, lambda: 0.0, terms });
        }
        Ok(ThetaModel { family, params: out, covariate_ranges })
    }

    fn eta(&self, k: usize, row: &[f64]) -> f64 {
        self.params[k]
            .terms
            .iter()
            .zip(row)
            .map(|(t, &x)| t.basis.eval(x).iter().map(|(j, v)| t.coefficients[j] * v).sum::<f64>())
            .sum()
    }

    /// Parameters at a single covariate row.
    pub fn params_at(&self, row: &[f64]) -> Result<ParamVector> {
        if row.len() != self.n_covariates() {
            return Err(Error::LengthMismatch(row.len(), self.n_covariates()));
        }
        let mut v = [0.0; 2];
        for k in 0..self.family.q() {
            v[k] = self.params[k].link.inverse(self.eta(k, row));
        }
        ParamVector::new(self.family, &v[..self.family.q()])
            .map_err(|e| Error::Numerical(format!("predicted parameter left its domain: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut m: ThetaModel = serde_json::from_str(s).map_err(|e| Error::InvalidSpec(format!("model JSON: {e}")))?;
        for p in &mut m.params {
            for t in &mut p.terms {
                t.basis.ensure_ready();
            }
        }
        Ok(m)
    }
}

/// Predicted parameters, one per input row. `extrapolated[i]` marks rows
/// with a covariate outside the range seen at fit time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub params: Vec<ParamVector>,
    pub extrapolated: Vec<bool>,
}

pub fn predict_params<C: AsRef<[f64]>>(model: &ThetaModel, x: &[C]) -> Result<Prediction> {
    if x.len() != model.n_covariates() {
        return Err(Error::LengthMismatch(x.len(), model.n_covariates()));
    }
    let m = x.first().map(|c| c.as_ref().len()).unwrap_or(0);
    column_count(x, m)?;
    let mut params = Vec::with_capacity(m);
    let mut extrapolated = Vec::with_capacity(m);
    let mut row = vec![0.0; x.len()];
    for i in 0..m {
        for (c, col) in x.iter().enumerate() {
            row[c] = col.as_ref()[i];
        }
        params.push(model.params_at(&row)?);
        extrapolated.push(row.iter().zip(&model.covariate_ranges).any(|(&v, &(lo, hi))| v < lo || v > hi));
    }
    Ok(Prediction { params, extrapolated })
}

/// Probability-integral-transform residuals `F(yᵢ; θ̂(xᵢ))`.
pub fn pit_residuals<C: AsRef<[f64]>>(model: &ThetaModel, x: &[C], y: &[f64]) -> Result<Vec<f64>> {
    let pred = predict_params(model, x)?;
    if pred.params.len() != y.len() {
        return Err(Error::LengthMismatch(pred.params.len(), y.len()));
    }
    y.iter()
        .zip(&pred.params)
        .map(|(&yi, p)| {
            model.family.check_support(yi)?;
            Ok(cdf_raw(model.family, p.values(), yi))
        })
        .collect()
}

/// Empirical-CDF transform: midrank / (n + 1).
pub fn empirical_pit(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    crate::indep::midranks(y).into_iter().map(|r| r / (n as f64 + 1.0)).collect()
}

/// Per-observation log-likelihood with first and second derivatives on the
/// link scale, plus the expected information.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ObsTerms {
    pub ll: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    pub info: [[f64; 2]; 2],
}

pub(crate) fn obs_terms(family: Family, eta: &[f64; 2], y: f64) -> ObsTerms {
    let mut t = ObsTerms::default();
    match family {
        Family::Gaussian => {
            let mu = eta[0];
            let s2 = (2.0 * eta[1]).exp();
            let r = y - mu;
            t.ll = log_density_raw(family, &[mu, eta[1].exp()], y);
            t.grad = [r / s2, -1.0 + r * r / s2];
            t.hess = [[-1.0 / s2, -2.0 * r / s2], [-2.0 * r / s2, -2.0 * r * r / s2]];
            t.info = [[1.0 / s2, 0.0], [0.0, 2.0]];
        }
        Family::GaussianFixedVariance => {
            let r = y - eta[0];
            t.ll = log_density_raw(family, &[eta[0]], y);
            t.grad[0] = r;
            t.hess[0][0] = -1.0;
            t.info[0][0] = 1.0;
        }
        Family::Gamma => {
            let (a, b) = (eta[0].exp(), eta[1].exp());
            let ly = y.ln();
            t.ll = log_density_raw(family, &[a, b], y);
            let g0 = a * (eta[1] - digamma(a) + ly);
            let tg = trigamma(a);
            t.grad = [g0, a - b * y];
            t.hess = [[g0 - a * a * tg, a], [a, -b * y]];
            t.info = [[a * a * tg, -a], [-a, a]];
        }
        Family::Exponential | Family::GammaFixedScale => {
            let l = eta[0].exp();
            t.ll = log_density_raw(family, &[l], y);
            t.grad[0] = 1.0 - l * y;
            t.hess[0][0] = -l * y;
            t.info[0][0] = 1.0;
        }
        Family::Pareto => {
            let th = eta[0].exp();
            let ly = y.ln();
            t.ll = log_density_raw(family, &[th], y);
            t.grad[0] = 1.0 - th * ly;
            t.hess[0][0] = -th * ly;
            t.info[0][0] = 1.0;
        }
        Family::Beta => {
            let (a, b) = (eta[0].exp(), eta[1].exp());
            t.ll = log_density_raw(family, &[a, b], y);
            let dab = digamma(a + b);
            let tab = trigamma(a + b);
            let (ta, tb) = (trigamma(a), trigamma(b));
            let g0 = a * (dab - digamma(a) + y.ln());
            let g1 = b * (dab - digamma(b) + (-y).ln_1p());
            t.grad = [g0, g1];
            t.hess = [[g0 + a * a * (tab - ta), a * b * tab], [a * b * tab, g1 + b * b * (tab - tb)]];
            t.info = [[a * a * (ta - tab), -a * b * tab], [-a * b * tab, b * b * (tb - tab)]];
        }
    }
    t
}

/// Penalised log-likelihood of one fitting problem as a function of the
/// stacked coefficient vector (parameter-major, then covariate-major).
#[derive(Clone, Debug)]
pub struct PenalizedObjective {
    family: Family,
    bases: Vec<BSplineBasis>,
    rows: Vec<BasisRow>,
    y: Vec<f64>,
    lambdas: Vec<f64>,
    cov_offsets: Vec<usize>,
    per_param: usize,
    penalties: Vec<Vec<f64>>,
}

struct Derivatives {
    gradient: DVector<f64>,
    observed: DMatrix<f64>,
    expected: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl PenalizedObjective {
    /// Build the objective with knots placed at quantiles of each covariate.
    pub fn new<C: AsRef<[f64]>>(
        family: Family,
        x: &[C],
        y: &[f64],
        lambdas: &[f64],
        options: &FitOptions,
    ) -> Result<Self> {
        let bases = x
            .iter()
            .enumerate()
            .map(|(c, col)| {
                BSplineBasis::from_quantiles(col.as_ref(), options.interior_knots, options.degree).map_err(
                    |e| match e {
                        Error::DegenerateCovariate(m) => Error::DegenerateCovariate(format!("covariate {c}: {m}")),
                        other => other,
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_bases(family, bases, x, y, lambdas)
    }

    fn with_bases<C: AsRef<[f64]>>(
        family: Family,
        bases: Vec<BSplineBasis>,
        x: &[C],
        y: &[f64],
        lambdas: &[f64],
    ) -> Result<Self> {
        let n = y.len();
        column_count(x, n)?;
        if lambdas.len() != family.q() {
            return Err(Error::ParamCount { expected: family.q(), got: lambdas.len() });
        }
        let p = bases.len();
        let mut rows = Vec::with_capacity(n * p);
        for i in 0..n {
            for (c, b) in bases.iter().enumerate() {
                rows.push(b.eval(x[c].as_ref()[i]));
            }
        }
        let mut cov_offsets = Vec::with_capacity(p);
        let mut acc = 0;
        for b in &bases {
            cov_offsets.push(acc);
            acc += b.len();
        }
        let penalties = bases.iter().map(|b| second_difference_penalty(b.len())).collect();
        Ok(PenalizedObjective {
            family,
            bases,
            rows,
            y: y.to_vec(),
            lambdas: lambdas.to_vec(),
            cov_offsets,
            per_param: acc,
            penalties,
        })
    }

    fn subset(&self, keep: &[usize], lambdas: &[f64]) -> Self {
        let p = self.bases.len();
        let mut rows = Vec::with_capacity(keep.len() * p);
        let mut y = Vec::with_capacity(keep.len());
        for &i in keep {
            rows.extend_from_slice(&self.rows[i * p..(i + 1) * p]);
            y.push(self.y[i]);
        }
        PenalizedObjective { rows, y, lambdas: lambdas.to_vec(), ..self.clone() }
    }

    pub fn n_coefficients(&self) -> usize {
        self.family.q() * self.per_param
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn eta_row(&self, b: &[f64], i: usize) -> [f64; 2] {
        let p = self.bases.len();
        let mut eta = [0.0; 2];
        for (k, e) in eta.iter_mut().enumerate().take(self.family.q()) {
            let base = k * self.per_param;
            for c in 0..p {
                let off = base + self.cov_offsets[c];
                for (j, v) in self.rows[i * p + c].iter() {
                    *e += b[off + j] * v;
                }
            }
        }
        eta
    }

    fn penalty_value(&self, b: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..self.family.q() {
            for (c, s) in self.penalties.iter().enumerate() {
                let m = self.bases[c].len();
                let off = k * self.per_param + self.cov_offsets[c];
                let blk = &b[off..off + m];
                let mut quad = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        quad += blk[i] * s[i * m + j] * blk[j];
                    }
                }
                total += self.lambdas[k] * quad;
            }
        }
        total + RIDGE * b.iter().map(|v| v * v).sum::<f64>()
    }

    /// Unpenalised log-likelihood (−∞ if any observation has zero density or
    /// a parameter overflows).
    pub fn log_likelihood(&self, b: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.y.len() {
            let eta = self.eta_row(b, i);
            let l = obs_loglik(self.family, &eta, self.y[i]);
            if !l.is_finite() {
                return f64::NEG_INFINITY;
            }
            ll += l;
        }
        ll
    }

    /// Penalised log-likelihood.
    pub fn value(&self, b: &[f64]) -> f64 {
        self.log_likelihood(b) - self.penalty_value(b)
    }

    /// Analytic gradient of [`Self::value`].
    pub fn gradient(&self, b: &[f64]) -> Vec<f64> {
        self.derivatives(b, false).gradient.iter().copied().collect()
    }

    fn derivatives(&self, b: &[f64], with_hessian: bool) -> Derivatives {
        let q = self.family.q();
        let p = self.bases.len();
        let dim = self.n_coefficients();
        let mut grad = vec![0.0; dim];
        let mut obs = vec![0.0; if with_hessian { dim * dim } else { 0 }];
        let mut exp = vec![0.0; if with_hessian { dim * dim } else { 0 }];
        let mut idx: Vec<(usize, usize, f64)> = Vec::with_capacity(q * p * 6);
        for i in 0..self.y.len() {
            let eta = self.eta_row(b, i);
            let t = obs_terms(self.family, &eta, self.y[i]);
            idx.clear();
            for k in 0..q {
                let base = k * self.per_param;
                for c in 0..p {
                    let off = base + self.cov_offsets[c];
                    for (j, v) in self.rows[i * p + c].iter() {
                        idx.push((k, off + j, v));
                        grad[off + j] += t.grad[k] * v;
                    }
                }
            }
            if with_hessian {
                for &(ka, ia, va) in &idx {
                    for &(kb, ib, vb) in &idx {
                        obs[ia * dim + ib] -= t.hess[ka][kb] * va * vb;
                        exp[ia * dim + ib] += t.info[ka][kb] * va * vb;
                    }
                }
            }
        }
        let mut penalty = DMatrix::zeros(dim, dim);
        for k in 0..q {
            for (c, s) in self.penalties.iter().enumerate() {
                let m = self.bases[c].len();
                let off = k * self.per_param + self.cov_offsets[c];
                for i in 0..m {
                    for j in 0..m {
                        penalty[(off + i, off + j)] += 2.0 * self.lambdas[k] * s[i * m + j];
                    }
                }
            }
        }
        for d in 0..dim {
            penalty[(d, d)] += 2.0 * RIDGE;
        }
        let pen_b = &penalty * DVector::from_column_slice(b);
        let gradient = DVector::from_vec(grad) - pen_b;
        let (observed, expected) = if with_hessian {
            (DMatrix::from_row_slice(dim, dim, &obs), DMatrix::from_row_slice(dim, dim, &exp))
        } else {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
        };
        Derivatives { gradient, observed, expected, penalty }
    }

    /// Coefficients of the constant model at the marginal moment estimate.
    pub fn initial_coefficients(&self) -> Result<Vec<f64>> {
        let start = moment_estimate(self.family, &self.y)?;
        let links = family_links(self.family);
        let mut b = vec![0.0; self.n_coefficients()];
        for k in 0..self.family.q() {
            let eta = links[k].apply(start.get(k));
            let off = k * self.per_param;
            for v in &mut b[off..off + self.bases[0].len()] {
                *v = eta;
            }
        }
        Ok(b)
    }

    /// Newton–Raphson with step halving from `start`.
    fn maximize(&self, start: Vec<f64>, max_iter: usize, tol: f64) -> Result<(Vec<f64>, FitDiagnostics)> {
        let mut b = start;
        let mut f = self.value(&b);
        if !f.is_finite() {
            return Err(Error::Numerical("initial penalised log-likelihood is not finite".into()));
        }
        let mut iterations = 0;
        let mut converged = false;
        let mut d = self.derivatives(&b, true);
        loop {
            let gmax = d.gradient.amax();
            if gmax < tol {
                converged = true;
                break;
            }
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let step =
                solve_step(&d).ok_or_else(|| Error::Numerical("penalised information matrix is singular".into()))?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let cand: Vec<f64> = b.iter().zip(step.iter()).map(|(bi, si)| bi + t * si).collect();
                let fc = self.value(&cand);
                if fc.is_finite() && fc >= f {
                    b = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no ascent possible along the Newton direction at working precision
                break;
            }
            d = self.derivatives(&b, true);
        }
        let max_gradient = d.gradient.amax();
        converged = converged || max_gradient < tol;
        let effective_df = self.effective_df(&d);
        Ok((
            b,
            FitDiagnostics {
                final_penalized_loglik: f,
                newton_iterations: iterations,
                converged,
                max_gradient,
                effective_df,
                lambdas: self.lambdas.clone(),
            },
        ))
    }

    fn effective_df(&self, d: &Derivatives) -> Vec<f64> {
        let info = if (&d.observed + &d.penalty).cholesky().is_some() { &d.observed } else { &d.expected };
        let total = info + &d.penalty;
        let q = self.family.q();
        match total.cholesky() {
            Some(ch) => {
                let hat = ch.solve(info);
                (0..q).map(|k| (k * self.per_param..(k + 1) * self.per_param).map(|j| hat[(j, j)]).sum()).collect()
            }
            None => vec![f64::NAN; q],
        }
    }
}

fn obs_loglik(family: Family, eta: &[f64; 2], y: f64) -> f64 {
    let links = [link_of(family, 0), link_of(family, 1)];
    let theta = [links[0].inverse(eta[0]), links[1].inverse(eta[1])];
    for (k, th) in theta.iter().enumerate().take(family.q()) {
        if !family.param_domain(k).contains(*th) {
            return f64::NEG_INFINITY;
        }
    }
    log_density_raw(family, &theta[..family.q()], y)
}

fn link_of(family: Family, k: usize) -> Link {
    if k < family.q() {
        Link::for_domain(family.param_domain(k))
    } else {
        Link::Identity
    }
}

/// Newton direction from the observed information when it is positive
/// definite after penalisation, Fisher scoring otherwise.
fn solve_step(d: &Derivatives) -> Option<DVector<f64>> {
    if let Some(ch) = (&d.observed + &d.penalty).cholesky() {
        return Some(ch.solve(&d.gradient));
    }
    (&d.expected + &d.penalty).cholesky().map(|ch| ch.solve(&d.gradient))
}

fn validate<C: AsRef<[f64]>>(family: Family, x: &[C], y: &[f64], min_n: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Precondition("need at least one covariate".into()));
    }
    column_count(x, y.len())?;
    if y.len() < min_n {
        return Err(Error::Precondition(format!("need n >= {min_n}, got {}", y.len())));
    }
    for &v in y {
        family.check_support(v)?;
    }
    for (c, col) in x.iter().enumerate() {
        if col.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("covariate {c} has non-finite values")));
        }
    }
    Ok(())
}

/// Fit θ̂(x) with the default options.
pub fn fit_conditional<C: AsRef<[f64]>>(family: Family, x: &[C], y: &[f64]) -> Result<(ThetaModel, FitDiagnostics)> {
    fit_conditional_with(family, x, y, &FitOptions::default())
}

pub fn fit_conditional_with<C: AsRef<[f64]>>(
    family: Family,
    x: &[C],
    y: &[f64],
    options: &FitOptions,
) -> Result<(ThetaModel, FitDiagnostics)> {
    validate(family, x, y, 30)?;
    let q = family.q();
    let full = PenalizedObjective::new(family, x, y, &vec![1.0; q], options)?;
    let lambdas = match &options.smoothing {
        Smoothing::Fixed(v) if v.len() == 1 => vec![v[0]; q],
        Smoothing::Fixed(v) if v.len() == q => v.clone(),
        Smoothing::Fixed(v) => return Err(Error::ParamCount { expected: q, got: v.len() }),
        Smoothing::CrossValidated { grid, folds } => select_lambdas(&full, x, y, grid, *folds, options)?,
    };
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Precondition("smoothing weights must be >= 0".into()));
    }
    let objective = PenalizedObjective { lambdas: lambdas.clone(), ..full };
    let start = objective.initial_coefficients()?;
    let (b, diag) = objective.maximize(start, options.max_iter, options.gradient_tol)?;
    Ok((objective.into_model(&b, &lambdas, x), diag))
}

impl PenalizedObjective {
    fn into_model<C: AsRef<[f64]>>(self, b: &[f64], lambdas: &[f64], x: &[C]) -> ThetaModel {
        let links = family_links(self.family);
        let params = (0..self.family.q())
            .map(|k| ParamSmooth {
                link: links[k],
                lambda: lambdas[k],
                terms: self
                    .bases
                    .iter()
                    .enumerate()
                    .map(|(c, basis)| {
                        let off = k * self.per_param + self.cov_offsets[c];
                        SplineTerm { basis: basis.clone(), coefficients: b[off..off + basis.len()].to_vec() }
                    })
                    .collect(),
            })
            .collect();
        let covariate_ranges = x
            .iter()
            .map(|c| {
                let c = c.as_ref();
                (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect();
        ThetaModel { family: self.family, params, covariate_ranges }
    }
}

/// Fold labels that depend only on the multiset of rows, so the selection is
/// invariant to row order: rows are ranked lexicographically by (x, y).
fn fold_labels<C: AsRef<[f64]>>(x: &[C], y: &[f64], folds: usize) -> Vec<usize> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for c in x {
            let c = c.as_ref();
            let o = c[a].total_cmp(&c[b]);
            if o.is_ne() {
                return o;
            }
        }
        y[a].total_cmp(&y[b])
    });
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank % folds;
    }
    labels
}

fn select_lambdas<C: AsRef<[f64]>>(
    full: &PenalizedObjective,
    x: &[C],
    y: &[f64],
    grid: &[f64],
    folds: usize,
    options: &FitOptions,
) -> Result<Vec<f64>> {
    if grid.is_empty() || folds < 2 {
        return Err(Error::Precondition("cross-validation needs a non-empty grid and >= 2 folds".into()));
    }
    let q = full.family.q();
    let labels = fold_labels(x, y, folds);
    let train: Vec<Vec<usize>> = (0..folds).map(|f| (0..y.len()).filter(|&i| labels[i] != f).collect()).collect();
    let test: Vec<Vec<usize>> = (0..folds).map(|f| (0..y.len()).filter(|&i| labels[i] == f).collect()).collect();
    // start each parameter at the grid point closest to 1
    let mid = grid.iter().copied().min_by(|a, b| a.ln().abs().total_cmp(&b.ln().abs())).unwrap_or(grid[0]);
    let mut current = vec![mid; q];
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let key = |l: &[f64]| l.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for k in 0..q {
        let candidates: Vec<Vec<f64>> = grid
            .iter()
            .map(|&g| {
                let mut l = current.clone();
                l[k] = g;
                l
            })
            .collect();
        let todo: Vec<usize> = (0..candidates.len()).filter(|&c| !memo.contains_key(&key(&candidates[c]))).collect();
        let jobs = todo.len() * folds;
        let scores = exec::try_map_range(jobs, |job| {
            let (ci, f) = (todo[job / folds], job % folds);
            cv_fold_score(full, &candidates[ci], &train[f], &test[f], options)
        })?;
        for (t, &ci) in todo.iter().enumerate() {
            let s: f64 = scores[t * folds..(t + 1) * folds].iter().sum();
            memo.insert(key(&candidates[ci]), s);
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (ci, cand) in candidates.iter().enumerate() {
            let s = memo[&key(cand)];
            if s > best_score {
                best_score = s;
                best = ci;
            }
        }
        current = candidates[best].clone();
    }
    Ok(current)
}

fn cv_fold_score(
    full: &PenalizedObjective,
    lambdas: &[f64],
    train: &[usize],
    test: &[usize],
    options: &FitOptions,
) -> Result<f64> {
    let obj = full.subset(train, lambdas);
    let start = obj.initial_coefficients()?;
    let b = match obj.maximize(start, options.max_iter, options.gradient_tol) {
        Ok((b, _)) => b,
        Err(Error::Numerical(_)) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let held = full.subset(test, lambdas);
    Ok(held.log_likelihood(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::quantile;
    use rand::Rng;

    fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, 0);
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    #[test]
    fn obs_terms_match_finite_differences() {
        let cases: Vec<(Family, [f64; 2], f64)> = vec![
            (Family::Gaussian, [0.3, -0.2], 1.1),
            (Family::GaussianFixedVariance, [0.3, 0.0], -0.4),
            (Family::Gamma, [0.4, 0.1], 2.3),
            (Family::GammaFixedScale, [-0.3, 0.0], 0.7),
            (Family::Exponential, [0.5, 0.0], 0.9),
            (Family::Pareto, [0.2, 0.0], 3.0),
            (Family::Beta, [0.3, 0.8], 0.35),
        ];
        let h = 1e-5;
        for (f, eta, y) in cases {
            let t = obs_terms(f, &eta, y);
            assert!((t.ll - obs_loglik(f, &eta, y)).abs() < 1e-12);
            for k in 0..f.q() {
                let mut up = eta;
                let mut dn = eta;
                up[k] += h;
                dn[k] -= h;
                let fd = (obs_loglik(f, &up, y) - obs_loglik(f, &dn, y)) / (2.0 * h);
                assert!((t.grad[k] - fd).abs() < 1e-6, "{f} grad {k}");
                let tu = obs_terms(f, &up, y);
                let td = obs_terms(f, &dn, y);
                for l in 0..f.q() {
                    let fd = (tu.grad[l] - td.grad[l]) / (2.0 * h);
                    assert!((t.hess[k][l] - fd).abs() < 1e-5, "{f} hess {k}{l}");
                }
            }
        }
    }

    #[test]
    fn degenerate_covariate_is_rejected() {
        let x = vec![2.0; 60];
        let y: Vec<f64> = (0..60).map(|i| 1.0 + i as f64 / 10.0).collect();
        let err = fit_conditional(Family::Gamma, &[&x], &y).unwrap_err();
        assert!(matches!(err, Error::DegenerateCovariate(_)), "{err}");
    }

    #[test]
    fn support_and_size_preconditions() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut y = vec![2.0; 40];
        y[3] = 0.5;
        assert!(matches!(fit_conditional(Family::Pareto, &[&x], &y), Err(Error::Support { .. })));
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit_conditional(Family::Pareto, &[&x], &[2.0; 10]), Err(Error::Precondition(_))));
    }

    #[test]
    fn constant_gaussian_mean_is_recovered() {
        let n = 500;
        let x = uniform(n, 0.0, 4.0, 1);
        let mut rng = crate::rng::stream(2, 0);
        let y: Vec<f64> = (0..n).map(|_| 5.0 + rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let (model, diag) = fit_conditional(Family::GaussianFixedVariance, &[&x], &y).unwrap();
        assert!(diag.converged);
        for i in 0..=40 {
            let xi = 4.0 * i as f64 / 40.0;
            let mu = model.params_at(&[xi]).unwrap().get(0);
            assert!((mu - 5.0).abs() < 0.3, "x={xi} mu={mu}");
        }
    }

    #[test]
    fn constant_model_predicts_constant() {
        let p = ParamVector::new(Family::Gamma, &[2.0, 3.0]).unwrap();
        let m = ThetaModel::constant(&p, vec![(0.0, 1.0)]).unwrap();
        let pred = predict_params(&m, &[vec![-1.0, 0.0, 0.5, 7.0]]).unwrap();
        for (i, pv) in pred.params.iter().enumerate() {
            assert!((pv.get(0) - 2.0).abs() < 1e-12 && (pv.get(1) - 3.0).abs() < 1e-12);
            assert_eq!(pred.extrapolated[i], i == 0 || i == 3);
        }
        let g =
            ThetaModel::constant(&ParamVector::new(Family::Gaussian, &[0.0, 1.0]).unwrap(), vec![(0.0, 1.0)]).unwrap();
        assert!((pit_residuals(&g, &[vec![0.3]], &[0.0]).unwrap()[0] - 0.5).abs() < 1e-15);
        let par = ThetaModel::constant(&ParamVector::new(Family::Pareto, &[2.0]).unwrap(), vec![(0.0, 1.0)]).unwrap();
        assert_eq!(pit_residuals(&par, &[vec![0.3]], &[1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn prediction_at_a_knot_equals_basis_expansion() {
        let n = 300;
        let x = uniform(n, 1.0, 3.0, 3);
        let mut rng = crate::rng::stream(4, 0);
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| {
                let p = ParamVector::new(Family::Pareto, &[2.0 + xi]).unwrap();
                quantile(Family::Pareto, &p, rng.gen_range(0.001..0.999)).unwrap()
            })
            .collect();
        let (model, _) = fit_conditional(Family::Pareto, &[&x], &y).unwrap();
        let term = &model.params[0].terms[0];
        for &k in term.basis.knots() {
            let dense = term.basis.eval_dense(k);
            let eta: f64 = dense.iter().zip(&term.coefficients).map(|(a, b)| a * b).sum();
            let th = model.params_at(&[k]).unwrap().get(0);
            assert!((th - eta.exp()).abs() < 1e-12 * th);
        }
    }

    #[test]
    fn predict_dimension_mismatch() {
        let p = ParamVector::new(Family::Pareto, &[2.0]).unwrap();
        let m = ThetaModel::constant(&p, vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(predict_params(&m, &[vec![0.0], vec![1.0]]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn model_json_round_trip() {
        let x = uniform(200, 0.0, 1.0, 5);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v * v + 0.1).collect();
        let (model, _) = fit_conditional(Family::Exponential, &[&x], &y).unwrap();
        let back = ThetaModel::from_json(&model.to_json()).unwrap();
        for &v in &[0.1, 0.5, 1.5] {
            assert_eq!(model.params_at(&[v]).unwrap(), back.params_at(&[v]).unwrap());
        }
    }

    #[test]
    fn fold_labels_ignore_row_order() {
        let x = uniform(50, 0.0, 1.0, 9);
        let y = uniform(50, 1.0, 2.0, 10);
        let a = fold_labels(&[&x], &y, 5);
        let rev_x: Vec<f64> = x.iter().rev().copied().collect();
        let rev_y: Vec<f64> = y.iter().rev().copied().collect();
        let mut b = fold_labels(&[&rev_x], &rev_y, 5);
        b.reverse();
        assert_eq!(a, b);
    }
}
