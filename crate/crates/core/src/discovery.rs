//! Causal direction discovery for conditionally parametric models.
//!
//! [`bivariate_discover`] judges each orientation of a pair by fitting the
//! effect's parameters as smooth functions of the cause and testing the PIT
//! residuals against the ranks of the cause. [`score_search`] ranks every
//! DAG on up to five variables by `−ln p` of a joint independence test on
//! all node residuals plus `λ · #edges`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::expfam::Family;
use crate::graphs::{enumerate_dags, Dag};
use crate::indep::{joint_indep_test, pairwise_test, TestResult};
use crate::rng::derive_seed;
use crate::smooth_mle::{empirical_pit, fit_conditional_with, pit_residuals, FitOptions, ThetaModel};

const MARGINAL_STREAM: u64 = u64::MAX - 1;
const FORWARD_STREAM: u64 = u64::MAX - 2;
const BACKWARD_STREAM: u64 = u64::MAX - 3;

pub const SUPPORT_MISMATCH: &str = "support_mismatch";
pub const TIE_RULE: &str =
    "lowest total, then fewer edges, then lower standardized joint statistic, then enumeration order";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub n_perm: usize,
    /// Resolve both/none-plausible bivariate outcomes by the lower score.
    pub fallback: bool,
    pub fit: FitOptions,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { lambda: 2.0, alpha: 0.05, seed: 0, n_perm: 499, fallback: false, fit: FitOptions::default() }
    }
}

impl ScoreConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Precondition(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Precondition(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_perm == 0 {
            return Err(Error::Precondition("n_perm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Forward,
    Backward,
    Empty,
    BothPlausible,
    NonePlausible,
    ScoredChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionVerdict {
    pub cause: String,
    pub effect: String,
    pub effect_family: Family,
    pub p_dependence: f64,
    pub p_residual: Option<f64>,
    pub plausible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_test: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ThetaModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub dag: Dag,
    pub rho: f64,
    pub penalty: f64,
    pub total: f64,
    pub p_value: f64,
    pub standardized: f64,
    /// Nodes whose fit did not converge.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub nonconverged: Vec<usize>,
    /// Nodes that were given parents although their values leave the
    /// family's support (score is +∞).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub support_mismatch: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    /// Bivariate verdict; `None` for a multivariate search.
    pub verdict: Option<Verdict>,
    /// Orientation `(cause, effect)` behind a `scored_choice` verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scored_choice: Option<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_test: Option<TestResult>,
    pub directions: Vec<DirectionVerdict>,
    pub alpha: f64,
    pub families: Vec<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_graph: Option<Dag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_table: Option<Vec<ScoreEntry>>,
    pub tie_rule: String,
}

impl DiscoveryReport {
    /// Orientation as `(cause, effect)` indices into the input pair when the
    /// report commits to one: forward, backward or scored choice.
    pub fn forced_direction(&self) -> Option<(usize, usize)> {
        match self.verdict? {
            Verdict::Forward => Some((0, 1)),
            Verdict::Backward => Some((1, 0)),
            Verdict::ScoredChoice => {
                let (c, _) = self.scored_choice.as_ref()?;
                Some(if self.directions.first().map(|d| &d.cause) == Some(c) { (0, 1) } else { (1, 0) })
            }
            _ => None,
        }
    }
}

fn check_columns<C: AsRef<[f64]>>(data: &[C], min_n: usize) -> Result<usize> {
    let n = data.first().map(|c| c.as_ref().len()).unwrap_or(0);
    for (k, c) in data.iter().enumerate() {
        let c = c.as_ref();
        if c.len() != n {
            return Err(Error::LengthMismatch(c.len(), n));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("column {k} contains non-finite values")));
        }
    }
    if n < min_n {
        return Err(Error::Precondition(format!("need n >= {min_n}, got {n}")));
    }
    Ok(n)
}

fn direction(
    cause: &[f64],
    effect: &[f64],
    family: Family,
    names: (&str, &str),
    p_dependence: f64,
    config: &ScoreConfig,
    stream: u64,
) -> Result<DirectionVerdict> {
    let mut out = DirectionVerdict {
        cause: names.0.to_string(),
        effect: names.1.to_string(),
        effect_family: family,
        p_dependence,
        p_residual: None,
        plausible: false,
        reason: None,
        converged: None,
        residual_test: None,
        model: None,
    };
    if !effect.iter().all(|&v| family.in_support(v)) {
        out.reason = Some(SUPPORT_MISMATCH.into());
        return Ok(out);
    }
    let (model, diag) = fit_conditional_with(family, &[cause], effect, &config.fit)?;
    let resid = pit_residuals(&model, &[cause], effect)?;
    let test = pairwise_test(&empirical_pit(cause), &resid, config.n_perm, derive_seed(config.seed, stream))?;
    out.p_residual = Some(test.p_value);
    out.plausible = test.p_value >= config.alpha;
    out.converged = Some(diag.converged);
    out.residual_test = Some(test);
    out.model = Some(model);
    Ok(out)
}

/// Plausibility test of both orientations of a pair.
pub fn bivariate_discover(
    x1: &[f64],
    x2: &[f64],
    f1: Family,
    f2: Family,
    config: &ScoreConfig,
) -> Result<DiscoveryReport> {
    bivariate_discover_named(x1, x2, f1, f2, ("x1", "x2"), config)
}

pub fn bivariate_discover_named(
    x1: &[f64],
    x2: &[f64],
    f1: Family,
    f2: Family,
    names: (&str, &str),
    config: &ScoreConfig,
) -> Result<DiscoveryReport> {
    config.validate()?;
    check_columns(&[x1, x2], 50)?;
    let marginal = pairwise_test(x1, x2, config.n_perm, derive_seed(config.seed, MARGINAL_STREAM))?;
    let mut report = DiscoveryReport {
        verdict: Some(Verdict::Empty),
        scored_choice: None,
        marginal_test: Some(marginal.clone()),
        directions: Vec::new(),
        alpha: config.alpha,
        families: vec![f1, f2],
        selected_graph: None,
        score_table: None,
        tie_rule: TIE_RULE.into(),
    };
    if marginal.p_value >= config.alpha {
        return Ok(report);
    }
    let fwd = direction(x1, x2, f2, names, marginal.p_value, config, FORWARD_STREAM)?;
    let bwd = direction(x2, x1, f1, (names.1, names.0), marginal.p_value, config, BACKWARD_STREAM)?;
    let verdict = match (fwd.plausible, bwd.plausible) {
        (true, false) => Verdict::Forward,
        (false, true) => Verdict::Backward,
        (true, true) => Verdict::BothPlausible,
        (false, false) => Verdict::NonePlausible,
    };
    report.verdict = Some(verdict);
    if config.fallback && matches!(verdict, Verdict::BothPlausible | Verdict::NonePlausible) {
        let data = [x1, x2];
        let families = [f1, f2];
        let graphs: Vec<(usize, Dag)> = enumerate_dags(2)?.enumerate().filter(|(_, g)| g.edge_count() == 1).collect();
        let mut cache = HashMap::new();
        let mut entries = Vec::new();
        for (idx, g) in &graphs {
            let fits = node_residuals(&data, g, &families, &config.fit, &mut cache)?;
            entries.push((*idx, score_from_residuals(g, &fits, config, derive_seed(config.seed, *idx as u64))?));
        }
        let best = best_entry(&entries.iter().map(|(i, e)| (*i, e)).collect::<Vec<_>>());
        let dag = &entries[best].1.dag;
        let (c, e) = dag.edges()[0];
        let nm = [names.0, names.1];
        report.verdict = Some(Verdict::ScoredChoice);
        report.scored_choice = Some((nm[c].to_string(), nm[e].to_string()));
        report.score_table = Some(entries.into_iter().map(|(_, e)| e).collect());
    }
    report.directions = vec![fwd, bwd];
    Ok(report)
}

/// Per-node residual vector plus fit status.
#[derive(Clone, Debug)]
enum NodeResidual {
    Ok { resid: Vec<f64>, converged: bool },
    SupportMismatch,
}

fn fit_node<C: AsRef<[f64]>>(
    data: &[C],
    node: usize,
    mask: u32,
    family: Family,
    fit: &FitOptions,
) -> Result<NodeResidual> {
    let y = data[node].as_ref();
    if mask == 0 {
        return Ok(NodeResidual::Ok { resid: empirical_pit(y), converged: true });
    }
    if !y.iter().all(|&v| family.in_support(v)) {
        return Ok(NodeResidual::SupportMismatch);
    }
    let parents: Vec<&[f64]> = (0..data.len()).filter(|i| mask >> i & 1 == 1).map(|i| data[i].as_ref()).collect();
    let (model, diag) = fit_conditional_with(family, &parents, y, fit)?;
    Ok(NodeResidual::Ok { resid: pit_residuals(&model, &parents, y)?, converged: diag.converged })
}

fn node_residuals<C: AsRef<[f64]> + Sync>(
    data: &[C],
    dag: &Dag,
    families: &[Family],
    fit: &FitOptions,
    cache: &mut HashMap<(usize, u32), NodeResidual>,
) -> Result<Vec<NodeResidual>> {
    (0..dag.d())
        .map(|j| {
            let key = (j, dag.parent_mask(j));
            if let Some(r) = cache.get(&key) {
                return Ok(r.clone());
            }
            let r = fit_node(data, j, key.1, families[j], fit)?;
            cache.insert(key, r.clone());
            Ok(r)
        })
        .collect()
}

fn score_from_residuals(dag: &Dag, fits: &[NodeResidual], config: &ScoreConfig, seed: u64) -> Result<ScoreEntry> {
    let penalty = config.lambda * dag.edge_count() as f64;
    let mut cols = Vec::new();
    let mut nonconverged = Vec::new();
    let mut support_mismatch = Vec::new();
    for (j, f) in fits.iter().enumerate() {
        match f {
            NodeResidual::Ok { resid, converged } => {
                if !converged {
                    nonconverged.push(j);
                }
                cols.push(resid.as_slice());
            }
            NodeResidual::SupportMismatch => support_mismatch.push(j),
        }
    }
    if !support_mismatch.is_empty() {
        return Ok(ScoreEntry {
            dag: dag.clone(),
            rho: f64::INFINITY,
            penalty,
            total: f64::INFINITY,
            p_value: 0.0,
            standardized: f64::INFINITY,
            nonconverged,
            support_mismatch,
        });
    }
    let t = joint_indep_test(&cols, config.n_perm, seed)?;
    let rho = -t.p_value.ln();
    Ok(ScoreEntry {
        dag: dag.clone(),
        rho,
        penalty,
        total: rho + penalty,
        p_value: t.p_value,
        standardized: t.standardized,
        nonconverged,
        support_mismatch,
    })
}

/// Index (into `entries`) of the winner under [`TIE_RULE`]; entries carry
/// their enumeration index.
fn best_entry(entries: &[(usize, &ScoreEntry)]) -> usize {
    let mut best = 0;
    for k in 1..entries.len() {
        let (ia, a) = entries[k];
        let (ib, b) = entries[best];
        let better = a
            .total
            .total_cmp(&b.total)
            .then(a.dag.edge_count().cmp(&b.dag.edge_count()))
            .then(a.standardized.total_cmp(&b.standardized))
            .then(ia.cmp(&ib))
            .is_lt();
        if better {
            best = k;
        }
    }
    best
}

/// Penalised independence score of one graph. Parentless nodes contribute
/// the empirical-CDF transform of their sample.
pub fn score_graph<C: AsRef<[f64]> + Sync>(
    data: &[C],
    dag: &Dag,
    families: &[Family],
    config: &ScoreConfig,
) -> Result<ScoreEntry> {
    config.validate()?;
    check_search_input(data, families)?;
    if dag.d() != data.len() {
        return Err(Error::LengthMismatch(dag.d(), data.len()));
    }
    let fits = node_residuals(data, dag, families, &config.fit, &mut HashMap::new())?;
    score_from_residuals(dag, &fits, config, config.seed)
}

fn check_search_input<C: AsRef<[f64]>>(data: &[C], families: &[Family]) -> Result<usize> {
    if families.len() != data.len() {
        return Err(Error::LengthMismatch(families.len(), data.len()));
    }
    check_columns(data, 30)
}

/// Exhaustive search over all DAGs on the columns of `data`; the seed for
/// graph `g` is `derive_seed(config.seed, g)`.
pub fn score_search<C: AsRef<[f64]> + Sync>(
    data: &[C],
    families: &[Family],
    config: &ScoreConfig,
) -> Result<DiscoveryReport> {
    config.validate()?;
    let d = data.len();
    if !(2..=5).contains(&d) {
        return Err(Error::Precondition(format!("score search needs 2 <= d <= 5 variables, got {d}")));
    }
    check_search_input(data, families)?;
    let dags: Vec<Dag> = enumerate_dags(d)?.collect();
    let keys: Vec<(usize, u32)> =
        (0..d).flat_map(|j| (0u32..1 << d).filter(move |m| m >> j & 1 == 0).map(move |m| (j, m))).collect();
    let fitted = exec::try_map_range(keys.len(), |k| {
        let (j, m) = keys[k];
        fit_node(data, j, m, families[j], &config.fit)
    })?;
    let cache: HashMap<(usize, u32), NodeResidual> = keys.into_iter().zip(fitted).collect();
    let table = exec::try_map_range(dags.len(), |g| {
        let dag = &dags[g];
        let fits: Vec<NodeResidual> = (0..d).map(|j| cache[&(j, dag.parent_mask(j))].clone()).collect();
        score_from_residuals(dag, &fits, config, derive_seed(config.seed, g as u64))
    })?;
    let best = best_entry(&table.iter().enumerate().collect::<Vec<_>>());
    Ok(DiscoveryReport {
        verdict: None,
        scored_choice: None,
        marginal_test: None,
        directions: Vec::new(),
        alpha: config.alpha,
        families: families.to_vec(),
        selected_graph: Some(table[best].dag.clone()),
        score_table: Some(table),
        tie_rule: TIE_RULE.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCombination {
    pub is_linear_combo: bool,
    pub max_rel_residual: f64,
    /// Numerical rank of `[1, T]`; smaller than its column count when the
    /// regressors are collinear.
    pub rank: usize,
    pub rank_deficient: bool,
}

fn rel_residual(design: &DMatrix<f64>, target: &[f64]) -> (f64, usize, DVector<f64>) {
    let y = DVector::from_column_slice(target);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * design.nrows().max(design.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let coef = svd.solve(&y, eps).expect("svd computed with both factors");
    let r = &y - design * &coef;
    let mean = y.mean();
    let spread = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    let denom = if spread > 1e-12 * y.norm() { spread } else { y.norm().max(f64::MIN_POSITIVE) };
    (r.norm() / denom, rank, coef)
}

fn design_with_intercept<C: AsRef<[f64]>>(cols: &[C], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1].as_ref()[i] })
}

/// Least-squares test of whether every θ column is an affine combination of
/// the sufficient-statistic columns.
pub fn linear_combination_check<C: AsRef<[f64]>, D: AsRef<[f64]>>(
    theta_values: &[C],
    stat_values: &[D],
    tol: f64,
) -> Result<LinearCombination> {
    let m = stat_values.first().map(|c| c.as_ref().len()).unwrap_or(0);
    let q1 = stat_values.len();
    if theta_values.is_empty() || q1 == 0 {
        return Err(Error::Precondition("need at least one θ column and one statistic column".into()));
    }
    if m <= q1 + 1 {
        return Err(Error::Precondition(format!("need m > q1 + 1 grid points, got m={m}, q1={q1}")));
    }
    for c in theta_values.iter().map(|c| c.as_ref()).chain(stat_values.iter().map(|c| c.as_ref())) {
        if c.len() != m {
            return Err(Error::LengthMismatch(c.len(), m));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("inputs must be finite".into()));
        }
    }
    let x = design_with_intercept(stat_values, m);
    let mut worst: f64 = 0.0;
    let mut rank = q1 + 1;
    for t in theta_values {
        let (r, rk, _) = rel_residual(&x, t.as_ref());
        worst = worst.max(r);
        rank = rk;
    }
    Ok(LinearCombination {
        is_linear_combo: worst <= tol,
        max_rel_residual: worst,
        rank,
        rank_deficient: rank < q1 + 1,
    })
}

/// `true` when a Gaussian model with mean `mu(x)` and standard deviation
/// `sigma(x)`, tabulated on `x_grid`, has the non-identifiable form
/// `1/σ² = a x² + c` (a ≥ 0, c > 0) and `μ/σ² = d + e x`.
pub fn gaussian_nonidentifiability_check(
    x_grid: &[f64],
    mu_values: &[f64],
    sigma_values: &[f64],
    tol: f64,
) -> Result<bool> {
    let m = x_grid.len();
    if m < 20 {
        return Err(Error::Precondition(format!("need at least 20 grid points, got {m}")));
    }
    if mu_values.len() != m || sigma_values.len() != m {
        return Err(Error::LengthMismatch(mu_values.len().max(sigma_values.len()), m));
    }
    if sigma_values.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Precondition("sigma must be positive".into()));
    }
    let prec: Vec<f64> = sigma_values.iter().map(|s| 1.0 / (s * s)).collect();
    let nat: Vec<f64> = mu_values.iter().zip(&prec).map(|(m, p)| m * p).collect();
    let sq: Vec<f64> = x_grid.iter().map(|x| x * x).collect();
    let (r1, _, coef) = rel_residual(&design_with_intercept(&[&sq], m), &prec);
    let (c, a) = (coef[0], coef[1]);
    let scale = prec.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let a_ok = a >= -tol * scale;
    let c_ok = c > 0.0;
    let (r2, _, _) = rel_residual(&design_with_intercept(&[x_grid], m), &nat);
    Ok(r1 <= tol && r2 <= tol && a_ok && c_ok)
}
