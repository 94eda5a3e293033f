//! Invariant causal prediction with parametric residuals.
//!
//! For a candidate parent set `S`, the conditional law of the target is fitted
//! once on the data pooled over all environments. If `S` contains the causal
//! parents and only covariate distributions change between environments, the
//! PIT residuals `F(Y; θ̂(X_S))` have the same (uniform) law in every
//! environment; a k-sample Anderson–Darling test checks exactly that. The
//! estimate is the intersection of all accepted sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::expfam::Family;
use crate::indep::{ad_ksample_test_with, TestResult, DEFAULT_PERMUTATIONS, DEFAULT_SEED};
use crate::rng::derive_seed;
use crate::simulate::LabeledDataset;
use crate::smooth_mle::{empirical_pit, fit_conditional_with, pit_residuals, FitOptions};

/// Minimum number of rows per environment.
pub const MIN_ENV_ROWS: usize = 30;
/// Largest covariate count accepted by [`icp_scan`].
pub const MAX_SCAN_COVARIATES: usize = 10;

/// Covariates, target and environment labels for the same rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvDataset {
    names: Vec<String>,
    covariates: Vec<Vec<f64>>,
    target: Vec<f64>,
    env: Vec<i64>,
    groups: Vec<(i64, Vec<usize>)>,
}

impl EnvDataset {
    /// `covariates` holds one column per covariate.
    pub fn new(names: Vec<String>, covariates: Vec<Vec<f64>>, target: Vec<f64>, env: Vec<i64>) -> Result<Self> {
        let n = target.len();
        if names.len() != covariates.len() {
            return Err(Error::LengthMismatch(names.len(), covariates.len()));
        }
        if env.len() != n {
            return Err(Error::LengthMismatch(env.len(), n));
        }
        for c in &covariates {
            if c.len() != n {
                return Err(Error::LengthMismatch(c.len(), n));
            }
        }
        let labels: BTreeSet<i64> = env.iter().copied().collect();
        if labels.len() < 2 {
            return Err(Error::Precondition(format!("need at least 2 environments, got {}", labels.len())));
        }
        let groups: Vec<(i64, Vec<usize>)> =
            labels.into_iter().map(|l| (l, (0..n).filter(|&i| env[i] == l).collect())).collect();
        if let Some((l, rows)) = groups.iter().find(|(_, rows)| rows.len() < MIN_ENV_ROWS) {
            return Err(Error::Precondition(format!(
                "environment {l} has {} rows; each environment needs at least {MIN_ENV_ROWS}",
                rows.len()
            )));
        }
        Ok(EnvDataset { names, covariates, target, env, groups })
    }

    /// Split a labelled dataset into covariates and the named target column.
    pub fn from_labeled(data: &LabeledDataset, target: &str) -> Result<Self> {
        let env = data.env.clone().ok_or_else(|| Error::Precondition("dataset has no environment labels".into()))?;
        let t = data
            .names
            .iter()
            .position(|n| n == target)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown target column '{target}'")))?;
        let keep: Vec<usize> = (0..data.d()).filter(|&i| i != t).collect();
        EnvDataset::new(
            keep.iter().map(|&i| data.names[i].clone()).collect(),
            keep.iter().map(|&i| data.columns[i].clone()).collect(),
            data.columns[t].clone(),
            env,
        )
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn d(&self) -> usize {
        self.covariates.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn env(&self) -> &[i64] {
        &self.env
    }

    /// Distinct environment labels in ascending order.
    pub fn environments(&self) -> Vec<i64> {
        self.groups.iter().map(|g| g.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub alpha: f64,
    pub n_perm: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig { alpha: 0.05, n_perm: DEFAULT_PERMUTATIONS, seed: DEFAULT_SEED, fit: FitOptions::default() }
    }
}

fn subset_mask(subset: &[usize]) -> u64 {
    subset.iter().fold(0, |m, &i| m | 1 << i)
}

/// Homogeneity across environments of the pooled-fit PIT residuals of the
/// target given the covariates in `subset`.
pub fn pooled_residual_invariance(data: &EnvDataset, subset: &[usize], family: Family) -> Result<TestResult> {
    let cfg = IcpConfig::default();
    pooled_residual_invariance_with(
        data,
        subset,
        family,
        &cfg.fit,
        cfg.n_perm,
        derive_seed(cfg.seed, subset_mask(subset)),
    )
}

pub fn pooled_residual_invariance_with(
    data: &EnvDataset,
    subset: &[usize],
    family: Family,
    fit: &FitOptions,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    if let Some(&i) = subset.iter().find(|&&i| i >= data.d()) {
        return Err(Error::Precondition(format!("covariate index {i} out of range for d={}", data.d())));
    }
    let resid = if subset.is_empty() {
        empirical_pit(&data.target)
    } else {
        let x: Vec<&[f64]> = subset.iter().map(|&i| data.covariates[i].as_slice()).collect();
        let (model, _) = fit_conditional_with(family, &x, &data.target, fit)?;
        pit_residuals(&model, &x, &data.target)?
    };
    let groups: Vec<Vec<f64>> = data.groups.iter().map(|(_, rows)| rows.iter().map(|&i| resid[i]).collect()).collect();
    ad_ksample_test_with(&groups, n_perm, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub subset: Vec<String>,
    pub indices: Vec<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub plausible: bool,
}

/// Outcome of a scan over all covariate subsets. When no subset is accepted
/// the estimate holds every covariate and `no_invariant_set` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceScan {
    pub alpha: f64,
    pub family: Family,
    pub results: Vec<SubsetResult>,
    pub estimate: Vec<String>,
    pub estimate_indices: Vec<usize>,
    pub no_invariant_set: bool,
}

pub fn icp_scan(data: &EnvDataset, family: Family, alpha: f64) -> Result<InvarianceScan> {
    icp_scan_with(data, family, &IcpConfig { alpha, ..IcpConfig::default() })
}

/// Tests every subset of the covariates, smallest subsets first. The
/// permutation stream of each subset is derived from its bitmask.
pub fn icp_scan_with(data: &EnvDataset, family: Family, cfg: &IcpConfig) -> Result<InvarianceScan> {
    let d = data.d();
    if d > MAX_SCAN_COVARIATES {
        return Err(Error::Capacity(format!(
            "subset scan is limited to {MAX_SCAN_COVARIATES} covariates (2^d fits), got {d}"
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Probability(cfg.alpha));
    }
    let mut masks: Vec<u64> = (0..1u64 << d).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let results = exec::try_map_range(masks.len(), |k| {
        let mask = masks[k];
        let indices: Vec<usize> = (0..d).filter(|&i| mask >> i & 1 == 1).collect();
        let t =
            pooled_residual_invariance_with(data, &indices, family, &cfg.fit, cfg.n_perm, derive_seed(cfg.seed, mask))?;
        Ok(SubsetResult {
            subset: indices.iter().map(|&i| data.names[i].clone()).collect(),
            indices,
            statistic: t.statistic,
            p_value: t.p_value,
            plausible: t.p_value >= cfg.alpha,
        })
    })?;
    let accepted: Vec<&SubsetResult> = results.iter().filter(|r| r.plausible).collect();
    let no_invariant_set = accepted.is_empty();
    let estimate_indices: Vec<usize> = if no_invariant_set {
        (0..d).collect()
    } else {
        (0..d).filter(|i| accepted.iter().all(|r| r.indices.contains(i))).collect()
    };
    Ok(InvarianceScan {
        alpha: cfg.alpha,
        family,
        estimate: estimate_indices.iter().map(|&i| data.names[i].clone()).collect(),
        estimate_indices,
        no_invariant_set,
        results,
    })
}
