use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use cpcm::discovery::{bivariate_discover_named, score_search, DiscoveryReport, ScoreConfig};
use cpcm::experiments::{figure2, gaussian_suite, robustness_suite, StudyConfig};
use cpcm::graphs::Dag;
use cpcm::invariance::{icp_scan_with, EnvDataset, IcpConfig};
use cpcm::simulate::{
    sample_cpcm, sample_exp_robustness, sample_gaussian_unidentifiable, sample_gp_benchmark,
    sample_linear_environments, sample_pareto_figure2, sample_pareto_unidentifiable, CpcmSpec, ExpRate, GaussianNonid,
    GpKind,
};
use cpcm::Family;

use crate::table::Table;
use crate::{BenchmarkArgs, DiscoverArgs, IcpArgs, SearchArgs, SimulateArgs};

pub const SCHEMA: &str = "cpcm-report/1";

fn family(s: &str) -> Result<Family> {
    Ok(s.parse::<Family>()?)
}

fn families(list: &[String]) -> Result<Vec<Family>> {
    list.iter().map(|s| family(s)).collect()
}

/// Writes the versioned report envelope. The report holds no timing or host
/// information, so identical runs give identical bytes.
fn emit(command: &str, config: Value, result: Value, out: Option<&Path>) -> Result<()> {
    let report = json!({ "schema": SCHEMA, "command": command, "config": config, "result": result });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write report {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn score_config(seed: u64, alpha: f64, n_perm: Option<usize>, fallback: bool) -> ScoreConfig {
    let base = ScoreConfig::default();
    ScoreConfig { seed, alpha, n_perm: n_perm.unwrap_or(base.n_perm), fallback, ..base }
}

pub fn discover(a: DiscoverArgs) -> Result<()> {
    let (f1, f2) = (family(&a.family1)?, family(&a.family2)?);
    let table = Table::read(&a.input)?;
    let cols = table.numeric(&[&a.x1, &a.x2])?;
    let cfg = score_config(a.seed, a.common.alpha, a.common.n_perm, !a.no_fallback);
    let mut report = bivariate_discover_named(&cols[0], &cols[1], f1, f2, (&a.x1, &a.x2), &cfg)?;
    if let Some(dir) = &a.dump_model {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for d in &report.directions {
            if let Some(m) = &d.model {
                let p = dir.join(format!("{}_to_{}.json", d.cause, d.effect));
                std::fs::write(&p, m.to_json() + "\n").with_context(|| format!("cannot write {}", p.display()))?;
            }
        }
    }
    for d in &mut report.directions {
        d.model = None;
    }
    let config = json!({
        "input": a.input, "x1": a.x1, "x2": a.x2, "family1": f1, "family2": f2,
        "alpha": cfg.alpha, "seed": cfg.seed, "n_perm": cfg.n_perm, "fallback": cfg.fallback,
    });
    emit("discover", config, serde_json::to_value(&report)?, a.common.out.as_deref())
}

fn rename_graphs(report: &mut DiscoveryReport, names: &[String]) -> Result<()> {
    let rename = |g: &Dag| g.clone().with_names(names.to_vec());
    if let Some(g) = &report.selected_graph {
        report.selected_graph = Some(rename(g)?);
    }
    if let Some(t) = &mut report.score_table {
        for e in t.iter_mut() {
            e.dag = rename(&e.dag)?;
        }
    }
    Ok(())
}

pub fn search(a: SearchArgs) -> Result<()> {
    let table = Table::read(&a.input)?;
    let names: Vec<String> = if a.columns.is_empty() {
        table.headers().iter().filter(|h| h.as_str() != "env").cloned().collect()
    } else {
        a.columns.clone()
    };
    let mut fams = families(&a.families)?;
    if fams.len() == 1 {
        fams = vec![fams[0]; names.len()];
    }
    if fams.len() != names.len() {
        bail!(cpcm::Error::Precondition(format!("{} families given for {} columns", fams.len(), names.len())));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let data = table.numeric(&refs)?;
    let cfg = ScoreConfig { lambda: a.lambda, ..score_config(a.seed, a.common.alpha, a.common.n_perm, false) };
    let mut report = score_search(&data, &fams, &cfg)?;
    rename_graphs(&mut report, &names)?;
    let config = json!({
        "input": a.input, "columns": names, "families": fams, "lambda": cfg.lambda,
        "alpha": cfg.alpha, "seed": cfg.seed, "n_perm": cfg.n_perm,
    });
    emit("search", config, serde_json::to_value(&report)?, a.common.out.as_deref())
}

fn constants<const K: usize>(given: &[f64], what: &str) -> Result<[f64; K]> {
    if given.is_empty() {
        return Ok([1.0; K]);
    }
    given.try_into().map_err(|_| {
        cpcm::Error::Precondition(format!("{what} takes {K} comma-separated constants, got {}", given.len())).into()
    })
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let seed = a.seed.expect("required by the parser");
    let mut config = json!({ "scenario": a.scenario, "n": a.n, "seed": seed, "out": a.out });
    let data = match a.scenario.as_str() {
        "pareto-fig2" => {
            config["alpha_param"] = json!(a.alpha_param);
            sample_pareto_figure2(a.alpha_param, a.n, seed)?
        }
        "pareto-nonid" => {
            let [pa, pb, pd] = constants::<3>(&a.params, "pareto-nonid")?;
            config["params"] = json!([pa, pb, pd]);
            sample_pareto_unidentifiable(pa, pb, pd, a.n, seed)?
        }
        "gaussian-nonid" => {
            let [ga, gc, gd, ge, alpha, beta] = constants::<6>(&a.params, "gaussian-nonid")?;
            config["params"] = json!([ga, gc, gd, ge, alpha, beta]);
            sample_gaussian_unidentifiable(GaussianNonid { a: ga, c: gc, d: gd, e: ge, alpha, beta }, a.n, seed)?
        }
        "gp" => {
            let kind: GpKind = a.kind.parse()?;
            config["kind"] = json!(kind);
            sample_gp_benchmark(kind, a.n, seed)?
        }
        "exp-robustness" => {
            let rate: ExpRate = a.rate.parse()?;
            config["rate"] = json!(rate);
            sample_exp_robustness(rate, a.n, seed)?
        }
        "linear-env" => {
            config["shift"] = json!(a.shift);
            sample_linear_environments(a.n / 2, a.shift, seed)?
        }
        "cpcm" => {
            let path = a
                .spec
                .as_ref()
                .ok_or_else(|| cpcm::Error::Precondition("the cpcm scenario needs --spec".into()))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let spec: CpcmSpec = serde_json::from_str(&text)
                .map_err(|e| cpcm::Error::InvalidSpec(format!("{}: {e}", path.display())))?;
            config["spec"] = serde_json::to_value(&spec)?;
            sample_cpcm(&spec, a.n, seed)?
        }
        other => bail!(cpcm::Error::Precondition(format!(
            "unknown scenario '{other}' (valid: pareto-fig2, pareto-nonid, gaussian-nonid, gp, exp-robustness, linear-env, cpcm)"
        ))),
    };
    let sidecar = data.write(&a.out)?;
    let result = json!({ "csv": a.out, "sidecar": sidecar, "dataset": data.sidecar() });
    emit("simulate", config, result, a.report.as_deref())
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let seed = a.seed.expect("required by the parser");
    let cfg =
        StudyConfig { n: a.n, reps: a.pairs, seed, n_perm: a.common.n_perm.unwrap_or(499), alpha: a.common.alpha };
    if cfg.reps == 0 {
        bail!(cpcm::Error::Precondition("--pairs must be positive".into()));
    }
    let mut config = json!({ "suite": a.suite, "pairs": cfg.reps, "n": cfg.n, "seed": seed, "n_perm": cfg.n_perm, "alpha": cfg.alpha });
    let result = match a.suite.as_str() {
        "gaussian" => {
            let kinds: Vec<GpKind> = if a.kinds.is_empty() {
                GpKind::ALL.to_vec()
            } else {
                a.kinds.iter().map(|k| k.parse()).collect::<cpcm::Result<_>>()?
            };
            config["kinds"] = json!(kinds);
            json!({ "accuracy": gaussian_suite(&kinds, &cfg)? })
        }
        "robustness" => {
            let rates: Vec<ExpRate> = if a.rates.is_empty() {
                ExpRate::ALL.to_vec()
            } else {
                a.rates.iter().map(|k| k.parse()).collect::<cpcm::Result<_>>()?
            };
            let fams = if a.families.is_empty() {
                vec![
                    Family::GammaFixedScale,
                    Family::Gamma,
                    Family::Pareto,
                    Family::GaussianFixedVariance,
                    Family::Gaussian,
                ]
            } else {
                families(&a.families)?
            };
            config["rates"] = json!(rates);
            config["families"] = json!(fams);
            json!({ "accuracy": robustness_suite(&rates, &fams, &cfg)? })
        }
        "pareto-fig2" => {
            let alphas = if a.alphas.is_empty() { vec![-2.0, 0.0, 2.0] } else { a.alphas.clone() };
            config["alphas"] = json!(alphas);
            json!({ "verdict_rates": figure2(&alphas, &cfg)? })
        }
        other => bail!(cpcm::Error::Precondition(format!(
            "unknown suite '{other}' (valid: gaussian, robustness, pareto-fig2)"
        ))),
    };
    emit("benchmark", config, result, a.common.out.as_deref())
}

pub fn icp(a: IcpArgs) -> Result<()> {
    let fam = family(&a.family)?;
    let table = Table::read(&a.input)?;
    let covariates: Vec<String> = if a.covariates.is_empty() {
        table.headers().iter().filter(|h| **h != a.target && **h != a.env_column).cloned().collect()
    } else {
        a.covariates.clone()
    };
    let mut names: Vec<&str> = covariates.iter().map(String::as_str).collect();
    names.push(&a.target);
    let mut cols = table.numeric(&names)?;
    let target = cols.pop().expect("target column requested");
    let env = table.integer(&a.env_column)?;
    let data = EnvDataset::new(covariates.clone(), cols, target, env)?;
    let base = IcpConfig::default();
    let cfg = IcpConfig { alpha: a.common.alpha, n_perm: a.common.n_perm.unwrap_or(base.n_perm), seed: a.seed, ..base };
    let scan = icp_scan_with(&data, fam, &cfg)?;
    let config = json!({
        "input": a.input, "target": a.target, "env_column": a.env_column, "covariates": covariates,
        "family": fam, "alpha": cfg.alpha, "seed": cfg.seed, "n_perm": cfg.n_perm,
        "environments": data.environments(),
    });
    emit("icp", config, serde_json::to_value(&scan)?, a.common.out.as_deref())
}
