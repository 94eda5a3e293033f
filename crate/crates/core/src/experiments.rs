//! Simulation studies: the Pareto tail-index sweep, the Gaussian pair
//! benchmark and the exponential robustness study. Replications run through
//! [`crate::exec`], one derived seed per replication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::discovery::{bivariate_discover, ScoreConfig, Verdict};
use crate::error::Result;
use crate::exec;
use crate::expfam::{Family, Support};
use crate::rng::derive_seed;
use crate::simulate::{
    sample_exp_robustness, sample_gp_benchmark, sample_pareto_figure2, ExpRate, GpKind, LabeledDataset,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub n_perm: usize,
    pub alpha: f64,
}

impl StudyConfig {
    fn score_config(&self, rep_seed: u64, fallback: bool) -> ScoreConfig {
        ScoreConfig { alpha: self.alpha, seed: rep_seed, n_perm: self.n_perm, fallback, ..ScoreConfig::default() }
    }
}

fn verdict_name(v: Option<Verdict>) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_else(|| "none".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRates {
    pub reps: usize,
    pub counts: BTreeMap<String, usize>,
}

impl VerdictRates {
    fn from_verdicts(v: &[Option<Verdict>]) -> Self {
        let mut counts = BTreeMap::new();
        for x in v {
            *counts.entry(verdict_name(*x)).or_insert(0) += 1;
        }
        VerdictRates { reps: v.len(), counts }
    }

    pub fn rate(&self, v: Verdict) -> f64 {
        *self.counts.get(&verdict_name(Some(v))).unwrap_or(&0) as f64 / self.reps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Figure2Row {
    pub alpha: f64,
    pub verdicts: VerdictRates,
}

/// Plausibility verdicts on the Pareto sweep for each tail exponent `alpha`
/// (CPCM with Pareto for both variables, no fallback).
pub fn figure2(alphas: &[f64], cfg: &StudyConfig) -> Result<Vec<Figure2Row>> {
    alphas
        .iter()
        .map(|&alpha| {
            let verdicts = exec::try_map_range(cfg.reps, |r| {
                let s = derive_seed(cfg.seed, r as u64);
                let d = sample_pareto_figure2(alpha, cfg.n, s)?;
                let rep = bivariate_discover(
                    &d.columns[0],
                    &d.columns[1],
                    Family::Pareto,
                    Family::Pareto,
                    &cfg.score_config(s, false),
                )?;
                Ok(rep.verdict)
            })?;
            Ok(Figure2Row { alpha, verdicts: VerdictRates::from_verdicts(&verdicts) })
        })
        .collect()
}

/// Accuracy of forced decisions for one scenario and family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub scenario: String,
    pub family: Family,
    pub correct: usize,
    pub reps: usize,
    pub accuracy: f64,
    pub verdicts: VerdictRates,
}

/// Forced-decision run on a ground-truth `x1 -> x2` pair: both/none
/// plausible outcomes are resolved by the score fallback and an empty
/// verdict counts as wrong.
fn forced_run(d: &LabeledDataset, family: Family, cfg: &StudyConfig, seed: u64) -> Result<(bool, Option<Verdict>)> {
    let rep = bivariate_discover(&d.columns[0], &d.columns[1], family, family, &cfg.score_config(seed, true))?;
    Ok((rep.forced_direction() == Some((0, 1)), rep.verdict))
}

fn accuracy_row(scenario: String, family: Family, outcomes: Vec<(bool, Option<Verdict>)>) -> AccuracyRow {
    let reps = outcomes.len();
    let correct = outcomes.iter().filter(|o| o.0).count();
    let verdicts: Vec<Option<Verdict>> = outcomes.into_iter().map(|o| o.1).collect();
    AccuracyRow {
        scenario,
        family,
        correct,
        reps,
        accuracy: correct as f64 / reps.max(1) as f64,
        verdicts: VerdictRates::from_verdicts(&verdicts),
    }
}

/// Gaussian two-parameter CPCM on the additive, multiplicative and
/// location-scale pair benchmarks.
pub fn gaussian_suite(kinds: &[GpKind], cfg: &StudyConfig) -> Result<Vec<AccuracyRow>> {
    kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let outcomes = exec::try_map_range(cfg.reps, |r| {
                let s = derive_seed(derive_seed(cfg.seed, k as u64), r as u64);
                let d = sample_gp_benchmark(kind, cfg.n, s)?;
                forced_run(&d, Family::Gaussian, cfg, s)
            })?;
            Ok(accuracy_row(kind.id().to_string(), Family::Gaussian, outcomes))
        })
        .collect()
}

/// Moves strictly positive data into `[1, ∞)` when the family needs it.
pub fn shift_into_support(family: Family, v: &[f64]) -> Vec<f64> {
    if family.support() == Support::AtLeastOne && v.iter().any(|&x| x < 1.0) {
        v.iter().map(|x| x + 1.0).collect()
    } else {
        v.to_vec()
    }
}

/// Exponential-effect data analysed with each candidate family; the same
/// datasets are shared across families.
pub fn robustness_suite(rates: &[ExpRate], families: &[Family], cfg: &StudyConfig) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::new();
    for (k, &rate) in rates.iter().enumerate() {
        let data = exec::try_map_range(cfg.reps, |r| {
            let s = derive_seed(derive_seed(cfg.seed, k as u64), r as u64);
            sample_exp_robustness(rate, cfg.n, s).map(|d| (s, d))
        })?;
        for &family in families {
            let outcomes = exec::try_map_range(cfg.reps, |r| {
                let (s, d) = &data[r];
                let mut shifted = d.clone();
                for c in &mut shifted.columns {
                    *c = shift_into_support(family, c);
                }
                forced_run(&shifted, family, cfg, *s)
            })?;
            rows.push(accuracy_row(rate.id().to_string(), family, outcomes));
        }
    }
    Ok(rows)
}
