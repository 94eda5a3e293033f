use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpcm::discovery::{score_search, ScoreConfig};
use cpcm::exec;
use cpcm::indep::{hsic_test, joint_indep_test};
use cpcm::invariance::{icp_scan_with, EnvDataset, IcpConfig};
use cpcm::simulate::{sample_exp_robustness, sample_linear_environments, ExpRate};
use cpcm::smooth_mle::fit_conditional;
use cpcm::Family;

const BACKENDS: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn permutation_tests(c: &mut Criterion) {
    let d = sample_exp_robustness(ExpRate::Linear, 500, 1).unwrap();
    let (x, y) = (&d.columns[0], &d.columns[1]);
    let mut g = c.benchmark_group("permutation_tests");
    g.sample_size(10);
    for (name, seq) in BACKENDS {
        exec::set_sequential(seq);
        g.bench_with_input(BenchmarkId::new("hsic_n500_b499", name), &(), |b, _| {
            b.iter(|| hsic_test(x, y, 499, 7).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("joint_d2_n500_b499", name), &(), |b, _| {
            b.iter(|| joint_indep_test(&[x, y], 499, 7).unwrap())
        });
    }
    exec::set_sequential(false);
    g.finish();
}

fn model_fitting(c: &mut Criterion) {
    let d = sample_exp_robustness(ExpRate::Linear, 500, 2).unwrap();
    let mut g = c.benchmark_group("fitting");
    g.sample_size(10);
    for (name, seq) in BACKENDS {
        exec::set_sequential(seq);
        g.bench_with_input(BenchmarkId::new("gamma_cv_n500", name), &(), |b, _| {
            b.iter(|| fit_conditional(Family::Gamma, &[&d.columns[0]], &d.columns[1]).unwrap())
        });
    }
    exec::set_sequential(false);
    g.finish();
}

fn searches(c: &mut Criterion) {
    let d = sample_exp_robustness(ExpRate::Quadratic, 300, 3).unwrap();
    let env = EnvDataset::from_labeled(&sample_linear_environments(150, 2.0, 3).unwrap(), "y").unwrap();
    let mut g = c.benchmark_group("searches");
    g.sample_size(10);
    for (name, seq) in BACKENDS {
        exec::set_sequential(seq);
        g.bench_with_input(BenchmarkId::new("score_search_d2_n300", name), &(), |b, _| {
            let cfg = ScoreConfig { n_perm: 199, ..ScoreConfig::default() };
            b.iter(|| score_search(&d.columns, &[Family::Gamma; 2], &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("icp_scan_d3_n300", name), &(), |b, _| {
            let cfg = IcpConfig { n_perm: 199, ..IcpConfig::default() };
            b.iter(|| icp_scan_with(&env, Family::Gaussian, &cfg).unwrap())
        });
    }
    exec::set_sequential(false);
    g.finish();
}

criterion_group!(benches, permutation_tests, model_fitting, searches);
criterion_main!(benches);
