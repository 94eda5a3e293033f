use cpcm::discovery::{bivariate_discover, ScoreConfig};
use cpcm::indep::{ad_ksample_test_with, hoeffding_d_test_with};
use cpcm::quad::integrate;
use cpcm::simulate::{
    figure2_theta, pareto_source_normalizer, sample_cpcm, sample_exp_robustness, sample_gaussian_unidentifiable,
    sample_gp_benchmark, sample_linear_environments, sample_pareto_figure2, sample_pareto_unidentifiable, CpcmSpec,
    ExpRate, Expr, GaussianNonid, GaussianSource, GpKind, NodeSpec, SourceSampler,
};
use cpcm::Family;
use proptest::prelude::*;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64;
    cov / (var(a) * var(b)).sqrt()
}

/// Rows sorted by the cause, cut into `bins` equal-count groups between the
/// 10% and 90% quantiles of the cause.
fn central_bins(x: &[f64], y: &[f64], bins: usize) -> Vec<Vec<(f64, f64)>> {
    let mut rows: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (rows.len() / 10, rows.len() * 9 / 10);
    rows[lo..hi].chunks((hi - lo) / bins).filter(|c| c.len() > 10).map(<[_]>::to_vec).collect()
}

#[test]
fn gaussian_chain_variances_add_up() {
    let spec = CpcmSpec {
        names: vec!["x1".into(), "x2".into(), "x3".into()],
        nodes: vec![
            NodeSpec::Source { sampler: SourceSampler::Family { family: Family::Gaussian, params: vec![0.0, 1.0] } },
            NodeSpec::Conditional { family: Family::GaussianFixedVariance, params: vec![Expr::var(0)] },
            NodeSpec::Conditional { family: Family::GaussianFixedVariance, params: vec![Expr::var(1)] },
        ],
    };
    let d = sample_cpcm(&spec, 100_000, 1).unwrap();
    for (k, col) in d.columns.iter().enumerate() {
        let v = var(col);
        assert!((v / (k + 1) as f64 - 1.0).abs() < 0.1, "node {k}: {v}");
    }
    assert_eq!(d.dag.edge_strings(), vec!["x1->x2", "x2->x3"]);
}

#[test]
fn standard_normal_source_mean() {
    let spec = CpcmSpec {
        names: vec!["x".into()],
        nodes: vec![NodeSpec::Source {
            sampler: SourceSampler::Family { family: Family::Gaussian, params: vec![0.0, 1.0] },
        }],
    };
    let n = 20_000;
    let d = sample_cpcm(&spec, n, 2).unwrap();
    assert!(mean(&d.columns[0]).abs() < 4.0 / (n as f64).sqrt());
}

#[test]
fn pareto_node_respects_its_support() {
    let spec = CpcmSpec {
        names: vec!["x".into(), "y".into()],
        nodes: vec![
            NodeSpec::Source { sampler: SourceSampler::Uniform { low: 1.0, high: 3.0 } },
            NodeSpec::Conditional { family: Family::Pareto, params: vec![Expr::c(2.0).add(Expr::var(0))] },
        ],
    };
    let d = sample_cpcm(&spec, 5000, 3).unwrap();
    assert!(d.columns[1].iter().all(|&v| v >= 1.0 && v.is_finite()));
}

fn ks_against(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    (1..200)
        .map(|k| {
            let i = k * n / 200;
            (cdf(s[i]) - (i as f64 + 0.5) / n as f64).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn pareto_rejection_sampler_matches_its_target() {
    for &(a, b, d) in &[(1.0, 1.0, 1.0), (1.0, 2.0, 3.0)] {
        let z = pareto_source_normalizer(a, b, d).unwrap();
        let p = |x: f64| 1.0 / (z * (a * x.ln() + b) * x.powf(d + 1.0));
        let mass = integrate(p, 1.0, f64::INFINITY, 1e-12, 1e-12).value;
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let data = sample_pareto_unidentifiable(a, b, d, 100_000, 4).unwrap();
        assert!(data.columns.iter().flatten().all(|&v| v >= 1.0));
        let ks = ks_against(&data.columns[0], |t| integrate(p, 1.0, t, 1e-12, 1e-10).value);
        assert!(ks < 0.01, "({a},{b},{d}): {ks}");
    }
}

#[test]
fn gaussian_rejection_sampler_matches_its_target() {
    let params = GaussianNonid { a: 1.0, c: 1.0, d: 1.0, e: 1.0, alpha: 1.0, beta: 1.0 };
    let src = GaussianSource::new(params).unwrap();
    let mass = integrate(|x| src.density(x), f64::NEG_INFINITY, f64::INFINITY, 1e-12, 1e-12).value;
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    let data = sample_gaussian_unidentifiable(params, 100_000, 5).unwrap();
    let ks = ks_against(&data.columns[0], |t| integrate(|x| src.density(x), f64::NEG_INFINITY, t, 1e-12, 1e-10).value);
    assert!(ks < 0.01, "{ks}");
}

#[test]
fn flat_precision_reduces_to_a_bivariate_normal() {
    // Cause precision 1 - e²/c = 1/2, slope e/c = 1/2, noise variance 1/c.
    let params = GaussianNonid { a: 0.0, c: 2.0, d: 0.5, e: 1.0, alpha: 0.0, beta: 1.0 };
    let data = sample_gaussian_unidentifiable(params, 10_000, 6).unwrap();
    let r = corr(&data.columns[0], &data.columns[1]);
    assert!((r - 0.5f64.sqrt()).abs() < 0.05, "{r}");
    let invalid = GaussianNonid { c: 1.0, ..params };
    assert!(sample_gaussian_unidentifiable(invalid, 10, 0).is_err());
}

#[test]
fn additive_gp_noise_is_homoscedastic() {
    let ok = (0..20u64)
        .filter(|&s| {
            let d = sample_gp_benchmark(GpKind::AnmG, 5000, s).unwrap();
            // Half the mean squared successive difference removes the smooth
            // mean inside each bin.
            let v: Vec<f64> = central_bins(&d.columns[0], &d.columns[1], 8)
                .iter()
                .map(|b| b.windows(2).map(|w| (w[1].1 - w[0].1).powi(2)).sum::<f64>() / (2.0 * (b.len() - 1) as f64))
                .collect();
            let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
            hi / lo < 2.0
        })
        .count();
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn multiplicative_pairs_have_zero_mean() {
    for s in 0..5u64 {
        let d = sample_gp_benchmark(GpKind::MnS, 20_000, s).unwrap();
        for b in central_bins(&d.columns[0], &d.columns[1], 8) {
            let m = b.iter().map(|r| r.1).sum::<f64>() / b.len() as f64;
            assert!(m.abs() < 0.2, "seed {s}: {m}");
        }
    }
}

#[test]
fn location_scale_gp_pairs_are_oriented() {
    let hits = (0..20u64)
        .filter(|&s| {
            let d = sample_gp_benchmark(GpKind::LsG, 1000, 500 + s).unwrap();
            let config = ScoreConfig { seed: s, fallback: true, ..ScoreConfig::default() };
            let r =
                bivariate_discover(&d.columns[0], &d.columns[1], Family::Gaussian, Family::Gaussian, &config).unwrap();
            r.forced_direction() == Some((0, 1))
        })
        .count();
    assert!(hits >= 17, "{hits}/20");
}

#[test]
fn exponential_robustness_scenario() {
    let d = sample_exp_robustness(ExpRate::Linear, 100_000, 7).unwrap();
    assert!(d.columns.iter().flatten().all(|&v| v > 0.0));
    let m = mean(&d.columns[0]);
    assert!((m - 2.07).abs() < 0.05, "{m}");
    let mut rows: Vec<(f64, f64)> = d.columns[0].iter().copied().zip(d.columns[1].iter().copied()).collect();
    rows.retain(|r| (1.0..=3.0).contains(&r.0));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for b in rows.chunks(rows.len() / 8) {
        let cm = b.iter().map(|r| r.1).sum::<f64>() / b.len() as f64;
        let target = b.iter().map(|r| 1.0 / r.0).sum::<f64>() / b.len() as f64;
        assert!((cm / target - 1.0).abs() < 0.2, "{cm} vs {target}");
    }
    for kind in ExpRate::ALL {
        let d = sample_exp_robustness(kind, 500, 8).unwrap();
        assert!(d.columns.iter().flatten().all(|&v| v > 0.0 && v.is_finite()), "{kind:?}");
    }
}

#[test]
fn untilted_sweep_matches_the_unidentifiable_model() {
    let a = sample_pareto_figure2(0.0, 2000, 9).unwrap();
    let b = sample_pareto_unidentifiable(1.0, 1.0, 1.0, 2000, 10).unwrap();
    for k in 0..2 {
        let p = ad_ksample_test_with(&[&a.columns[k], &b.columns[k]], 499, k as u64).unwrap().p_value;
        assert!(p >= 0.01, "column {k}: {p}");
    }
}

#[test]
fn negative_tilt_is_nearly_independent() {
    let kept = (0..40u64)
        .filter(|&s| {
            let d = sample_pareto_figure2(-2.0, 300, s).unwrap();
            hoeffding_d_test_with(&d.columns[0], &d.columns[1], 499, s).unwrap().p_value >= 0.05
        })
        .count();
    assert!(kept >= 24, "{kept}/40");
}

#[test]
fn sweep_theta_is_one_at_the_boundary() {
    for alpha in [-3.0, -1.0, 0.0, 0.5, 2.0, 7.0] {
        assert_eq!(figure2_theta(alpha, 1.0), 1.0);
    }
}

#[test]
fn environment_generator_layout() {
    let d = sample_linear_environments(50, 2.0, 1).unwrap();
    assert_eq!(d.names, vec!["x1", "x2", "x3", "y"]);
    let env = d.env.as_ref().unwrap();
    assert_eq!(env.iter().filter(|&&e| e == 1).count(), 50);
    assert_eq!(d.dag.edge_strings(), vec!["x1->y", "y->x2"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generators_depend_only_on_the_seed(seed in 0u64..1_000_000) {
        let runs = |s: u64| {
            vec![
                sample_pareto_figure2(2.0, 100, s).unwrap().columns,
                sample_gp_benchmark(GpKind::LsS, 100, s).unwrap().columns,
                sample_exp_robustness(ExpRate::GpRandom, 100, s).unwrap().columns,
                sample_pareto_unidentifiable(1.0, 2.0, 3.0, 100, s).unwrap().columns,
            ]
        };
        let a = runs(seed);
        prop_assert_eq!(&a, &runs(seed));
        let b = runs(seed + 1);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_ne!(x, y);
        }
    }

    #[test]
    fn sampled_values_are_finite(seed in 0u64..1_000_000, alpha in -3.0f64..3.0) {
        let d = sample_pareto_figure2(alpha, 200, seed).unwrap();
        prop_assert!(d.columns.iter().flatten().all(|v| v.is_finite() && *v >= 1.0));
    }
}
