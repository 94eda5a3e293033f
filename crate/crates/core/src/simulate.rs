//! Seeded data generators: generic conditionally parametric models, the
//! non-identifiable Pareto and Gaussian constructions, and the synthetic
//! benchmarks (Gaussian-process and sigmoid pairs, exponential robustness
//! pairs, the Pareto tail-index sweep).

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::expfam::{quantile_raw, Family, ParamVector};
use crate::graphs::Dag;
use crate::indep::{ad_ksample_test_with, TestResult};
use crate::quad::integrate;
use crate::rng::{stream, StreamRng};

/// Uniform draw on the open interval (0, 1).
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Closed-form parameter expression over node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, f64),
    Log(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn add(self, other: Expr) -> Expr {
        Expr::Add(vec![self, other])
    }

    pub fn mul(self, other: Expr) -> Expr {
        Expr::Mul(vec![self, other])
    }

    pub fn pow(self, p: f64) -> Expr {
        Expr::Pow(Box::new(self), p)
    }

    pub fn ln(self) -> Expr {
        Expr::Log(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => row[*i],
            Expr::Add(t) => t.iter().map(|e| e.eval(row)).sum(),
            Expr::Mul(t) => t.iter().map(|e| e.eval(row)).product(),
            Expr::Pow(b, p) => b.eval(row).powf(*p),
            Expr::Log(a) => a.eval(row).ln(),
            Expr::Exp(a) => a.eval(row).exp(),
        }
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Expr::Add(t) | Expr::Mul(t) => t.iter().for_each(|e| e.collect_vars(out)),
            Expr::Pow(b, _) | Expr::Log(b) | Expr::Exp(b) => b.collect_vars(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum SourceSampler {
    /// Any catalogue family, sampled by inversion.
    Family {
        family: Family,
        params: Vec<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Normal restricted to values above `lower`.
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lower: f64,
    },
    Cauchy {
        location: f64,
        scale: f64,
    },
}

impl SourceSampler {
    fn validate(&self) -> Result<()> {
        match self {
            SourceSampler::Family { family, params } => ParamVector::new(*family, params).map(|_| ()),
            SourceSampler::Uniform { low, high } if low < high => Ok(()),
            SourceSampler::TruncatedNormal { sd, .. } if *sd > 0.0 => Ok(()),
            SourceSampler::Cauchy { scale, .. } if *scale > 0.0 => Ok(()),
            other => Err(Error::InvalidSpec(format!("invalid source sampler {other:?}"))),
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            SourceSampler::Family { family, params } => quantile_raw(*family, params, open_unit(rng)),
            SourceSampler::Uniform { low, high } => low + (high - low) * open_unit(rng),
            SourceSampler::TruncatedNormal { mean, sd, lower } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = mean + sd * z;
                if x > *lower {
                    break x;
                }
            },
            SourceSampler::Cauchy { location, scale } => Cauchy::new(*location, *scale).expect("validated").sample(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeSpec {
    Source {
        sampler: SourceSampler,
    },
    /// `X_j | parents ~ family(params(parents))`.
    Conditional {
        family: Family,
        params: Vec<Expr>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpcmSpec {
    pub names: Vec<String>,
    pub nodes: Vec<NodeSpec>,
}

impl CpcmSpec {
    /// Graph implied by the variables each parameter expression reads.
    pub fn dag(&self) -> Result<Dag> {
        let d = self.nodes.len();
        if self.names.len() != d {
            return Err(Error::LengthMismatch(self.names.len(), d));
        }
        let mut edges = Vec::new();
        for (j, node) in self.nodes.iter().enumerate() {
            match node {
                NodeSpec::Source { sampler } => sampler.validate()?,
                NodeSpec::Conditional { family, params } => {
                    if params.len() != family.q() {
                        return Err(Error::ParamCount { expected: family.q(), got: params.len() });
                    }
                    let mut vars = Vec::new();
                    params.iter().for_each(|e| e.collect_vars(&mut vars));
                    for i in vars {
                        if i >= d || i == j {
                            return Err(Error::InvalidSpec(format!(
                                "node {} reads invalid variable {i}",
                                self.names[j]
                            )));
                        }
                        edges.push((i, j));
                    }
                }
            }
        }
        Dag::from_edges(d, &edges)
            .map_err(|_| Error::InvalidSpec("parameter expressions form a cycle".into()))?
            .with_names(self.names.clone())
    }
}

/// Generated data with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub dag: Dag,
    pub seed: u64,
    pub scenario: String,
    pub env: Option<Vec<i64>>,
    pub parameters: serde_json::Value,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn sidecar(&self) -> serde_json::Value {
        json!({
            "scenario": self.scenario,
            "seed": self.seed,
            "n": self.n(),
            "columns": self.names,
            "ground_truth": self.dag.edge_strings(),
            "has_env": self.env.is_some(),
            "parameters": self.parameters,
        })
    }

    /// Write `path` as CSV and the ground-truth sidecar next to it (same stem,
    /// `.json` extension). Returns the sidecar path.
    pub fn write(&self, path: &Path) -> Result<std::path::PathBuf> {
        let io = |e: std::io::Error| Error::Precondition(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Precondition(format!("{e}")))?;
        let mut header = self.names.clone();
        if self.env.is_some() {
            header.push("env".into());
        }
        w.write_record(&header).map_err(|e| Error::Precondition(format!("{e}")))?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| format!("{}", c[i])).collect();
            if let Some(env) = &self.env {
                rec.push(env[i].to_string());
            }
            w.write_record(&rec).map_err(|e| Error::Precondition(format!("{e}")))?;
        }
        w.flush().map_err(io)?;
        let side = path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serialises");
        std::fs::write(&side, text + "\n").map_err(io)?;
        Ok(side)
    }
}

fn require_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::Precondition(format!("need n >= {min}, got {n}")));
    }
    Ok(())
}

fn pair_dataset(
    x1: Vec<f64>,
    x2: Vec<f64>,
    seed: u64,
    scenario: &str,
    parameters: serde_json::Value,
) -> LabeledDataset {
    LabeledDataset {
        names: vec!["x1".into(), "x2".into()],
        columns: vec![x1, x2],
        dag: Dag::from_edges(2, &[(0, 1)])
            .expect("single edge")
            .with_names(vec!["x1".into(), "x2".into()])
            .expect("names"),
        seed,
        scenario: scenario.into(),
        env: None,
        parameters,
    }
}

/// Ancestral sampling; each node draws from its own stream.
pub fn sample_cpcm(spec: &CpcmSpec, n: usize, seed: u64) -> Result<LabeledDataset> {
    require_n(n, 1)?;
    let dag = spec.dag()?;
    let d = spec.nodes.len();
    let mut cols = vec![vec![0.0; n]; d];
    let mut row = vec![0.0; d];
    for j in dag.topological_order() {
        let mut rng = stream(seed, j as u64);
        match &spec.nodes[j] {
            NodeSpec::Source { sampler } => {
                for v in cols[j].iter_mut() {
                    *v = sampler.sample(&mut rng);
                }
            }
            NodeSpec::Conditional { family, params } => {
                let q = family.q();
                let mut theta = [0.0; 2];
                for i in 0..n {
                    for (k, r) in row.iter_mut().enumerate() {
                        *r = cols[k][i];
                    }
                    for k in 0..q {
                        theta[k] = params[k].eval(&row);
                        if !family.param_domain(k).contains(theta[k]) {
                            return Err(Error::InvalidSpec(format!(
                                "node {}: parameter {} = {} at row {i} leaves its domain",
                                spec.names[j],
                                family.param_names()[k],
                                theta[k]
                            )));
                        }
                    }
                    cols[j][i] = quantile_raw(*family, &theta[..q], open_unit(&mut rng));
                }
            }
        }
        if cols[j].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("node {} produced non-finite values", spec.names[j])));
        }
    }
    Ok(LabeledDataset {
        names: spec.names.clone(),
        columns: cols,
        dag,
        seed,
        scenario: "cpcm".into(),
        env: None,
        parameters: serde_json::to_value(spec).expect("spec serialises"),
    })
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must be > 0, got {v}")))
    }
}

/// Backward parameters `(α, β, δ)` of the non-identifiable Pareto model
/// with forward parameters `(a, b, d)`.
pub fn backward_pareto_params(a: f64, b: f64, d: f64) -> (f64, f64, f64) {
    (a, d, b)
}

/// Normaliser of the cause density `1 / ([a log x + b] x^{d+1})` on
/// `[1, ∞)`, computed in `t = log x`.
pub fn pareto_source_normalizer(a: f64, b: f64, d: f64) -> Result<f64> {
    let q = integrate(|t| (-d * t).exp() / (a * t + b), 0.0, f64::INFINITY, 1e-14, 1e-13);
    if !q.converged {
        return Err(Error::Numerical("quadrature of the Pareto cause density did not converge".into()));
    }
    Ok(q.value)
}

/// Forward joint density `p_X(x) · p_{Y|X}(y | x)` of the non-identifiable
/// Pareto model.
pub fn pareto_forward_joint_density(a: f64, b: f64, d: f64, x: f64, y: f64) -> Result<f64> {
    let z = pareto_source_normalizer(a, b, d)?;
    let theta = a * x.ln() + b;
    let px = 1.0 / (z * theta * x.powf(d + 1.0));
    let cond = crate::expfam::density(Family::Pareto, &ParamVector::new(Family::Pareto, &[theta])?, y)?;
    Ok(px * cond)
}

/// Backward factorisation `p_Y(y) · p_{X|Y}(x | y)` with `(α, β, δ)` from
/// [`backward_pareto_params`].
pub fn pareto_backward_joint_density(a: f64, b: f64, d: f64, x: f64, y: f64) -> Result<f64> {
    let (al, be, de) = backward_pareto_params(a, b, d);
    let z = pareto_source_normalizer(al, de, be)?;
    let theta = al * y.ln() + be;
    let py = 1.0 / (z * (al * y.ln() + be) * y.powf(de + 1.0));
    let cond = crate::expfam::density(Family::Pareto, &ParamVector::new(Family::Pareto, &[theta])?, x)?;
    Ok(py * cond)
}

/// Draw from `p(x) ∝ 1 / ([a log x + b] x^{d+1})` on `[1, ∞)` by rejection
/// from Pareto(d); the acceptance probability is `b / (a log x + b)`.
fn pareto_source_draw(a: f64, b: f64, d: f64, rng: &mut StreamRng) -> f64 {
    loop {
        let x = (1.0 - open_unit(rng)).powf(-1.0 / d);
        if open_unit(rng) * (a * x.ln() + b) <= b {
            return x;
        }
    }
}

pub fn sample_pareto_unidentifiable(a: f64, b: f64, d: f64, n: usize, seed: u64) -> Result<LabeledDataset> {
    positive("a", a)?;
    positive("b", b)?;
    positive("d", d)?;
    require_n(n, 1)?;
    let mut r1 = stream(seed, 0);
    let mut r2 = stream(seed, 1);
    let x1: Vec<f64> = (0..n).map(|_| pareto_source_draw(a, b, d, &mut r1)).collect();
    let x2: Vec<f64> =
        x1.iter().map(|&x| quantile_raw(Family::Pareto, &[a * x.ln() + b], open_unit(&mut r2))).collect();
    Ok(pair_dataset(x1, x2, seed, "pareto-unidentifiable", json!({"a": a, "b": b, "d": d})))
}

/// Tail-index sweep: cause with density ∝ 1/([log x + 1] x²), effect
/// Pareto with `θ(x) = x^α log x + 1`.
pub fn sample_pareto_figure2(alpha: f64, n: usize, seed: u64) -> Result<LabeledDataset> {
    require_n(n, 1)?;
    if !alpha.is_finite() {
        return Err(Error::Precondition("alpha must be finite".into()));
    }
    let mut r1 = stream(seed, 0);
    let mut r2 = stream(seed, 1);
    let x1: Vec<f64> = (0..n).map(|_| pareto_source_draw(1.0, 1.0, 1.0, &mut r1)).collect();
    let x2: Vec<f64> =
        x1.iter().map(|&x| quantile_raw(Family::Pareto, &[figure2_theta(alpha, x)], open_unit(&mut r2))).collect();
    Ok(pair_dataset(x1, x2, seed, "pareto-fig2", json!({"alpha": alpha})))
}

pub fn figure2_theta(alpha: f64, x: f64) -> f64 {
    x.powf(alpha) * x.ln() + 1.0
}

/// Constants of the non-identifiable Gaussian construction:
/// `1/σ²(x) = a x² + c`, `μ(x)/σ²(x) = d + e x`, and cause density
/// `∝ σ(x) exp(−(x−α)²/(2β²) + μ(x)²/(2σ²(x)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNonid {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussianNonid {
    /// Leading quadratic coefficient of the negative log cause density; the
    /// density is normalisable iff it is positive.
    pub fn curvature(&self) -> f64 {
        1.0 / (self.beta * self.beta) - if self.a == 0.0 { self.e * self.e / self.c } else { 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0) || !(self.c > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidSpec("need a >= 0, c > 0 and beta > 0".into()));
        }
        if !(self.curvature() > 0.0) {
            return Err(Error::InvalidSpec(
                "cause density is not normalisable: need 1/beta^2 > e^2/c when a = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn sigma(&self, x: f64) -> f64 {
        1.0 / (self.a * x * x + self.c).sqrt()
    }

    pub fn mu(&self, x: f64) -> f64 {
        (self.d + self.e * x) / (self.a * x * x + self.c)
    }

    /// Unnormalised log density of the cause.
    pub fn log_kernel(&self, x: f64) -> f64 {
        let p = self.a * x * x + self.c;
        -0.5 * p.ln() - (x - self.alpha).powi(2) / (2.0 * self.beta * self.beta)
            + (self.d + self.e * x).powi(2) / (2.0 * p)
    }
}

/// Normalised cause density of the Gaussian construction, with a Gaussian
/// rejection envelope.
pub struct GaussianSource {
    params: GaussianNonid,
    shift: f64,
    log_z: f64,
    center: f64,
    env_sd: f64,
    log_m: f64,
}

impl GaussianSource {
    pub fn new(params: GaussianNonid) -> Result<Self> {
        params.validate()?;
        let k = params.curvature();
        let spread = 1.0 / k.sqrt();
        let mean_guess = if params.a == 0.0 {
            (params.alpha / params.beta.powi(2) + params.d * params.e / params.c) / k
        } else {
            params.alpha
        };
        let lo = mean_guess - 30.0 * spread - 10.0;
        let hi = mean_guess + 30.0 * spread + 10.0;
        let m = 60_001;
        let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
        let (center, shift) = grid
            .iter()
            .map(|&x| (x, params.log_kernel(x)))
            .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let env_sd = 1.5 * spread;
        let log_env = |x: f64| -0.5 * ((x - center) / env_sd).powi(2);
        let log_m =
            grid.iter().map(|&x| params.log_kernel(x) - shift - log_env(x)).fold(f64::NEG_INFINITY, f64::max) + 0.01;
        let q = integrate(|x| (params.log_kernel(x) - shift).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-14, 1e-12);
        if !q.converged {
            return Err(Error::Numerical("quadrature of the Gaussian cause density did not converge".into()));
        }
        Ok(GaussianSource { params, shift, log_z: q.value.ln(), center, env_sd, log_m })
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.params.log_kernel(x) - self.shift - self.log_z).exp()
    }

    fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.center + self.env_sd * z;
            let log_ratio = self.params.log_kernel(x) - self.shift - (-0.5 * z * z) - self.log_m;
            if log_ratio > 0.0 {
                return Err(Error::Numerical(format!("rejection envelope fails to dominate the target at x = {x}")));
            }
            if open_unit(rng).ln() <= log_ratio {
                return Ok(x);
            }
        }
    }
}

pub fn sample_gaussian_unidentifiable(params: GaussianNonid, n: usize, seed: u64) -> Result<LabeledDataset> {
    require_n(n, 1)?;
    let src = GaussianSource::new(params)?;
    let mut r1 = stream(seed, 0);
    let mut r2 = stream(seed, 1);
    let x1 = (0..n).map(|_| src.draw(&mut r1)).collect::<Result<Vec<f64>>>()?;
    let x2: Vec<f64> = x1
        .iter()
        .map(|&x| {
            let z: f64 = r2.sample(StandardNormal);
            params.mu(x) + params.sigma(x) * z
        })
        .collect();
    Ok(pair_dataset(x1, x2, seed, "gaussian-unidentifiable", serde_json::to_value(params).expect("serialises")))
}

/// Two-sample homogeneity checks of `(x, y)` against its mirror image
/// `(y, x)`, along the projections `x + y` and `x − y`. The first half of
/// the rows supplies the original sample and the second half the mirrored
/// one, so the two samples are independent.
pub fn swap_symmetry_test(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<[TestResult; 2]> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let h = x.len() / 2;
    let sum_a: Vec<f64> = (0..h).map(|i| x[i] + y[i]).collect();
    let sum_b: Vec<f64> = (h..2 * h).map(|i| y[i] + x[i]).collect();
    let dif_a: Vec<f64> = (0..h).map(|i| x[i] - y[i]).collect();
    let dif_b: Vec<f64> = (h..2 * h).map(|i| y[i] - x[i]).collect();
    Ok([
        ad_ksample_test_with(&[&sum_a, &sum_b], n_perm, seed)?,
        ad_ksample_test_with(&[&dif_a, &dif_b], n_perm, crate::rng::derive_seed(seed, 1))?,
    ])
}

/// Gaussian-process path with squared-exponential kernel (bandwidth 1) on an
/// evenly spaced grid.
pub fn gp_path(grid: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    let m = grid.len();
    let k = DMatrix::from_fn(m, m, |i, j| (-(grid[i] - grid[j]).powi(2) / 2.0).exp());
    let mut jitter = 1e-8;
    let chol = loop {
        let mut kj = k.clone();
        for i in 0..m {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            break c;
        }
        jitter *= 10.0;
    };
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let l = chol.l();
    (0..m).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect()
}

/// Piecewise-linear interpolation, constant beyond the grid ends.
pub fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let m = grid.len();
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[m - 1] {
        return values[m - 1];
    }
    let k = grid.partition_point(|&g| g <= x).min(m - 1);
    let (g0, g1) = (grid[k - 1], grid[k]);
    let w = (x - g0) / (g1 - g0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

pub const GP_GRID_POINTS: usize = 200;

fn grid_over(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..GP_GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GP_GRID_POINTS - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GpKind {
    #[serde(rename = "ANMg")]
    AnmG,
    #[serde(rename = "ANMs")]
    AnmS,
    #[serde(rename = "MNs")]
    MnS,
    #[serde(rename = "LSg")]
    LsG,
    #[serde(rename = "LSs")]
    LsS,
}

impl GpKind {
    pub const ALL: [GpKind; 5] = [GpKind::AnmG, GpKind::AnmS, GpKind::MnS, GpKind::LsG, GpKind::LsS];

    pub fn id(self) -> &'static str {
        match self {
            GpKind::AnmG => "ANMg",
            GpKind::AnmS => "ANMs",
            GpKind::MnS => "MNs",
            GpKind::LsG => "LSg",
            GpKind::LsS => "LSs",
        }
    }
}

impl std::str::FromStr for GpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GpKind::ALL.into_iter().find(|k| k.id().eq_ignore_ascii_case(s)).ok_or_else(|| {
            Error::InvalidSpec(format!("unknown benchmark kind '{s}' (valid: ANMg, ANMs, MNs, LSg, LSs)"))
        })
    }
}

/// Random sigmoid `c₁ / (1 + exp(−c₂ (x − c₃)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sigmoid {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Sigmoid {
    pub fn draw(rng: &mut StreamRng) -> Self {
        Sigmoid { c1: rng.gen_range(-2.0..2.0), c2: rng.gen_range(0.5..2.0), c3: rng.gen_range(-2.0..2.0) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c1 / (1.0 + (-self.c2 * (x - self.c3)).exp())
    }
}

/// Additive, multiplicative and location-scale Gaussian pairs.
pub fn sample_gp_benchmark(kind: GpKind, n: usize, seed: u64) -> Result<LabeledDataset> {
    require_n(n, 100)?;
    let mut rx = stream(seed, 0);
    let mut rf = stream(seed, 1);
    let mut re = stream(seed, 2);
    let sd1 = 2f64.sqrt();
    let x1: Vec<f64> = (0..n).map(|_| sd1 * rx.sample::<f64, _>(StandardNormal)).collect();
    let grid = grid_over(&x1);
    let mut params = json!({"kind": kind.id(), "x1_sd": sd1});
    let mu: Box<dyn Fn(f64) -> f64> = match kind {
        GpKind::AnmG | GpKind::LsG => {
            let path = gp_path(&grid, &mut rf);
            let g = grid.clone();
            Box::new(move |x| interpolate(&g, &path, x))
        }
        GpKind::AnmS | GpKind::LsS => {
            let s = Sigmoid::draw(&mut rf);
            params["mu_sigmoid"] = json!(s);
            Box::new(move |x| s.eval(x))
        }
        GpKind::MnS => Box::new(|_| 0.0),
    };
    let sigma: Box<dyn Fn(f64) -> f64> = match kind {
        GpKind::AnmG | GpKind::AnmS => {
            let s = rf.gen_range(0.2..(0.4f64).sqrt());
            params["sigma"] = json!(s);
            Box::new(move |_| s)
        }
        GpKind::LsG => {
            let path = gp_path(&grid, &mut rf);
            let lo = path.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (a, b) = ((0.1f64).ln(), 2f64.ln());
            let scaled: Vec<f64> = path.iter().map(|v| (a + (b - a) * (v - lo) / (hi - lo)).exp()).collect();
            let g = grid.clone();
            Box::new(move |x| interpolate(&g, &scaled, x))
        }
        GpKind::MnS | GpKind::LsS => {
            let mut s = Sigmoid::draw(&mut rf);
            s.c1 = 1.0;
            let amp = rf.gen_range(0.5..1.9);
            params["sigma_sigmoid"] = json!({"c2": s.c2, "c3": s.c3, "amplitude": amp});
            Box::new(move |x| 0.1 + amp * s.eval(x))
        }
    };
    let x2: Vec<f64> = x1.iter().map(|&x| mu(x) + sigma(x) * re.sample::<f64, _>(StandardNormal)).collect();
    Ok(pair_dataset(x1, x2, seed, &format!("gp-{}", kind.id()), params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpRate {
    Linear,
    Quadratic,
    ExpHalf,
    GpRandom,
}

impl ExpRate {
    pub const ALL: [ExpRate; 4] = [ExpRate::Linear, ExpRate::Quadratic, ExpRate::ExpHalf, ExpRate::GpRandom];

    pub fn id(self) -> &'static str {
        match self {
            ExpRate::Linear => "linear",
            ExpRate::Quadratic => "quadratic",
            ExpRate::ExpHalf => "exp_half",
            ExpRate::GpRandom => "gp_random",
        }
    }
}

impl std::str::FromStr for ExpRate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExpRate::ALL.into_iter().find(|k| k.id() == s).ok_or_else(|| {
            Error::InvalidSpec(format!("unknown rate '{s}' (valid: linear, quadratic, exp_half, gp_random)"))
        })
    }
}

/// Exponential effect with rate `α(X₁)`, cause a normal N(2, 1) truncated to
/// positive values.
pub fn sample_exp_robustness(kind: ExpRate, n: usize, seed: u64) -> Result<LabeledDataset> {
    require_n(n, 100)?;
    let mut rx = stream(seed, 0);
    let mut rf = stream(seed, 1);
    let mut re = stream(seed, 2);
    let src = SourceSampler::TruncatedNormal { mean: 2.0, sd: 1.0, lower: 0.0 };
    let x1: Vec<f64> = (0..n).map(|_| src.sample(&mut rx)).collect();
    let rate: Box<dyn Fn(f64) -> f64> = match kind {
        ExpRate::Linear => Box::new(|x| x),
        ExpRate::Quadratic => Box::new(|x| x * x + 1.0),
        ExpRate::ExpHalf => Box::new(|x| x.exp() / 2.0),
        ExpRate::GpRandom => {
            let grid = grid_over(&x1);
            let path = gp_path(&grid, &mut rf);
            Box::new(move |x| interpolate(&grid, &path, x).exp())
        }
    };
    let x2: Vec<f64> = x1.iter().map(|&x| quantile_raw(Family::Exponential, &[rate(x)], open_unit(&mut re))).collect();
    Ok(pair_dataset(x1, x2, seed, &format!("exp-{}", kind.id()), json!({"rate": kind.id()})))
}

/// Two environments of the linear Gaussian system `x1 → y → x2` with an
/// unrelated `x3`. Environment 1 moves the mean of `x1` by `shift`; every
/// other mechanism is shared. Columns are `x1, x2, x3, y` with labels in
/// `env`.
pub fn sample_linear_environments(n_per_env: usize, shift: f64, seed: u64) -> Result<LabeledDataset> {
    require_n(n_per_env, 30)?;
    let mut rng = stream(seed, 0);
    let n = 2 * n_per_env;
    let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    let mut env = Vec::with_capacity(n);
    for e in 0..2i64 {
        for _ in 0..n_per_env {
            let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let x1 = z[0] + if e == 1 { shift } else { 0.0 };
            let y = 1.0 + x1 + z[1];
            let x2 = 0.5 * y + 0.7 * z[2];
            cols[0].push(x1);
            cols[1].push(x2);
            cols[2].push(z[3]);
            cols[3].push(y);
            env.push(e);
        }
    }
    let names: Vec<String> = ["x1", "x2", "x3", "y"].iter().map(|s| s.to_string()).collect();
    let dag = Dag::from_edges(4, &[(0, 3), (3, 1)])?.with_names(names.clone())?;
    Ok(LabeledDataset {
        names,
        columns: cols,
        dag,
        seed,
        scenario: "linear-environments".into(),
        env: Some(env),
        parameters: json!({"n_per_env": n_per_env, "shift": shift, "target": "y", "invariant_set": ["x1"]}),
    })
}
