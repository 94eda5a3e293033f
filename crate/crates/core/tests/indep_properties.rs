use cpcm::indep::{ad_ksample_test_with, hoeffding_d_test_with, hsic_test, joint_indep_test, TestMethod};
use cpcm::rng::stream;
use cpcm::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64, idx: u64) -> Vec<f64> {
    let mut rng = stream(seed, idx);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn uniforms(n: usize, seed: u64, idx: u64) -> Vec<f64> {
    let mut rng = stream(seed, idx);
    (0..n).map(|_| rng.gen()).collect()
}

fn rejection_rate(seeds: u64, mut p_value: impl FnMut(u64) -> f64) -> f64 {
    (0..seeds).filter(|&s| p_value(s) < 0.05).count() as f64 / seeds as f64
}

#[test]
fn hsic_detects_identical_inputs() {
    let hits = (0..100u64)
        .filter(|&s| {
            let u = normals(200, s, 0);
            hsic_test(&u, &u, 199, s).unwrap().p_value < 0.01
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn hsic_level_under_independence() {
    let rate = rejection_rate(200, |s| hsic_test(&normals(200, s, 1), &normals(200, s, 2), 499, s).unwrap().p_value);
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn hoeffding_identity_attains_the_smallest_p_value() {
    let u = uniforms(100, 5, 0);
    let r = hoeffding_d_test_with(&u, &u, 999, 5).unwrap();
    assert_eq!(r.p_value, 1.0 / 1000.0);
    assert!((r.statistic - 1.0).abs() < 1e-12, "{}", r.statistic);
    assert_eq!(r.method, TestMethod::HoeffdingD);
}

#[test]
fn hoeffding_level_at_n500() {
    let rate = rejection_rate(200, |s| {
        hoeffding_d_test_with(&uniforms(500, s, 1), &uniforms(500, s, 2), 999, s).unwrap().p_value
    });
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn hoeffding_rejects_tiny_samples() {
    let u = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert!(matches!(hoeffding_d_test_with(&u, &u, 99, 0), Err(Error::Precondition(_))));
}

#[test]
fn joint_level_three_columns_n300() {
    let rate = rejection_rate(200, |s| {
        let cols = [uniforms(300, s, 1), uniforms(300, s, 2), uniforms(300, s, 3)];
        joint_indep_test(&cols, 499, s).unwrap().p_value
    });
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn joint_detects_duplicated_column() {
    let hits = (0..40u64)
        .filter(|&s| {
            let u = uniforms(200, s, 1);
            let w = uniforms(200, s, 2);
            joint_indep_test(&[u.clone(), u, w], 199, s).unwrap().p_value < 0.01
        })
        .count();
    assert!(hits >= 38, "{hits}/40");
}

#[test]
fn joint_needs_two_columns() {
    assert!(joint_indep_test(&[uniforms(50, 0, 0)], 99, 0).is_err());
}

#[test]
fn ad_detects_unit_mean_shift() {
    let hits = (0..40u64)
        .filter(|&s| {
            let a = normals(200, s, 1);
            let b: Vec<f64> = normals(200, s, 2).iter().map(|v| v + 1.0).collect();
            ad_ksample_test_with(&[a, b], 199, s).unwrap().p_value < 0.01
        })
        .count();
    assert!(hits >= 38, "{hits}/40");
}

#[test]
fn ad_level_two_groups() {
    let rate = rejection_rate(200, |s| {
        ad_ksample_test_with(&[normals(200, s, 1), normals(200, s, 2)], 499, s).unwrap().p_value
    });
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn ad_needs_two_groups() {
    assert!(ad_ksample_test_with(&[normals(50, 0, 0)], 99, 0).is_err());
}

#[test]
fn hoeffding_statistic_survives_monotone_transforms() {
    for s in 0..20u64 {
        let u = normals(150, s, 1);
        let v: Vec<f64> = normals(150, s, 2).iter().zip(&u).map(|(e, x)| 0.15 * x + e).collect();
        let eu: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let ev: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let d = hoeffding_d_test_with(&u, &v, 199, s).unwrap();
        let de = hoeffding_d_test_with(&eu, &ev, 199, s).unwrap();
        assert_eq!(d.statistic, de.statistic);
        assert_eq!(d.p_value, de.p_value);
    }
}

#[test]
fn hsic_decision_survives_exp_transform() {
    for s in 0..20u64 {
        let u = normals(150, s, 1);
        let strength = if s % 2 == 0 { 0.0 } else { 0.8 };
        let v: Vec<f64> = normals(150, s, 2).iter().zip(&u).map(|(e, x)| strength * x + e).collect();
        let eu: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let h = hsic_test(&u, &v, 199, s).unwrap().p_value < 0.05;
        let he = hsic_test(&eu, &v, 199, s).unwrap().p_value < 0.05;
        assert_eq!(h, he, "trial {s}");
    }
}

/// Permutation p-values under the null are close to uniform: the
/// Kolmogorov distance over 200 seeds stays inside the 5% band.
#[test]
fn null_p_values_are_uniform() {
    let mut p: Vec<f64> =
        (0..200u64).map(|s| hsic_test(&uniforms(100, s, 7), &uniforms(100, s, 8), 199, s).unwrap().p_value).collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).abs().max((v - i as f64 / n).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.36 / n.sqrt(), "KS distance {ks}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_result(seed in any::<u64>(), n in 20usize..60) {
        let u = uniforms(n, seed, 1);
        let v = uniforms(n, seed, 2);
        prop_assert_eq!(hsic_test(&u, &v, 49, seed).unwrap(), hsic_test(&u, &v, 49, seed).unwrap());
        prop_assert_eq!(
            hoeffding_d_test_with(&u, &v, 49, seed).unwrap(),
            hoeffding_d_test_with(&u, &v, 49, seed).unwrap()
        );
        prop_assert_eq!(
            joint_indep_test(&[&u, &v], 49, seed).unwrap(),
            joint_indep_test(&[&u, &v], 49, seed).unwrap()
        );
    }

    #[test]
    fn add_one_p_value_bounds(seed in any::<u64>(), b in 1usize..80) {
        let u = uniforms(30, seed, 1);
        let v = uniforms(30, seed, 2);
        let lo = 1.0 / (b as f64 + 1.0);
        for r in [
            hsic_test(&u, &v, b, seed).unwrap(),
            hoeffding_d_test_with(&u, &v, b, seed).unwrap(),
            joint_indep_test(&[&u, &v], b, seed).unwrap(),
            ad_ksample_test_with(&[&u[..15], &u[15..]], b, seed).unwrap(),
        ] {
            prop_assert!(r.p_value >= lo - 1e-15 && r.p_value <= 1.0);
            prop_assert_eq!(r.n_permutations, b);
        }
    }

    #[test]
    fn hoeffding_is_rank_invariant(seed in any::<u64>(), shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let u = uniforms(40, seed, 1);
        let v = uniforms(40, seed, 2);
        let u2: Vec<f64> = u.iter().map(|x| shift + scale * x.powi(3)).collect();
        let v2: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let a = hoeffding_d_test_with(&u, &v, 49, seed).unwrap();
        let b = hoeffding_d_test_with(&u2, &v2, 49, seed).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert_eq!(a.p_value, b.p_value);
    }
}
