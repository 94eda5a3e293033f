//! Permutation-calibrated dependence and homogeneity tests.
//!
//! All p-values use the add-one rule `(1 + #{T_b ≥ T}) / (B + 1)`. Each
//! permutation `b` draws from its own counter-derived stream, so the result
//! does not depend on how the permutation loop is scheduled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng;

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;
/// Above this many rows the median-heuristic bandwidth uses an evenly spaced
/// subsample.
pub const BANDWIDTH_SUBSAMPLE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Hsic,
    HoeffdingD,
    JointPerm,
    AdKsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n_permutations: usize,
    pub seed: u64,
    /// `(T − mean) / sd` of the observed statistic against its permutation
    /// distribution; comparable across tests with different scales.
    pub standardized: f64,
}

/// 1-based ranks with ties replaced by their average rank.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Dense 0-based ranks (equal values share a rank).
fn dense_ranks(v: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0; v.len()];
    let mut r = 0;
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && v[i] != v[order[k - 1]] {
            r += 1;
        }
        out[i] = r;
    }
    (out, if v.is_empty() { 0 } else { r + 1 })
}

fn check_input(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition(format!("{what} contains non-finite values")));
    }
    if v.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::DegenerateInput(format!("{what} is constant")));
    }
    Ok(())
}

fn finish(method: TestMethod, stat: f64, null: &[f64], seed: u64) -> TestResult {
    let b = null.len();
    let exceed = null.iter().filter(|&&t| t >= stat).count();
    let mean = null.iter().sum::<f64>() / b as f64;
    let var = null.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (b.max(2) - 1) as f64;
    let standardized = if var > 0.0 { (stat - mean) / var.sqrt() } else { 0.0 };
    TestResult {
        statistic: stat,
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        method,
        n_permutations: b,
        seed,
        standardized,
    }
}

fn require_perms(n_perm: usize) -> Result<()> {
    if n_perm == 0 {
        return Err(Error::Precondition("need at least one permutation".into()));
    }
    Ok(())
}

/// Median of the non-zero pairwise distances, on an evenly spaced subsample
/// of at most [`BANDWIDTH_SUBSAMPLE`] points.
pub fn median_bandwidth(v: &[f64]) -> Result<f64> {
    let n = v.len();
    let m = n.min(BANDWIDTH_SUBSAMPLE);
    let pts: Vec<f64> = (0..m).map(|i| v[i * n / m]).collect();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in 0..i {
            let x = (pts[i] - pts[j]).abs();
            if x > 0.0 {
                d.push(x);
            }
        }
    }
    if d.is_empty() {
        return Err(Error::DegenerateInput("all pairwise distances are zero".into()));
    }
    let mid = d.len() / 2;
    let (_, &mut med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(med)
}

/// Gaussian kernel matrix (row-major) with the median-heuristic bandwidth.
fn gram(v: &[f64]) -> Result<Vec<f64>> {
    let h = median_bandwidth(v)?;
    let n = v.len();
    let s = -1.0 / (2.0 * h * h);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let e = (s * (v[i] - v[j]).powi(2)).exp();
            k[i * n + j] = e;
            k[j * n + i] = e;
        }
    }
    Ok(k)
}

fn center(k: &[f64], n: usize) -> Vec<f64> {
    let row: Vec<f64> = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = k[i * n + j] - row[i] - row[j] + all;
        }
    }
    c
}

/// `tr(Kc · L_π) / n²` where `L_π[i][j] = L[π(i)][π(j)]`.
fn hsic_trace(kc: &[f64], l: &[f64], perm: Option<&[usize]>, n: usize) -> f64 {
    let mut s = 0.0;
    match perm {
        None => {
            for (a, b) in kc.iter().zip(l) {
                s += a * b;
            }
        }
        Some(p) => {
            for i in 0..n {
                let lrow = &l[p[i] * n..(p[i] + 1) * n];
                let krow = &kc[i * n..(i + 1) * n];
                for j in 0..n {
                    s += krow[j] * lrow[p[j]];
                }
            }
        }
    }
    s / (n * n) as f64
}

fn check_pair(u: &[f64], v: &[f64], min_n: usize) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    if u.len() < min_n {
        return Err(Error::Precondition(format!("need n >= {min_n}, got {}", u.len())));
    }
    check_input(u, "first input")?;
    check_input(v, "second input")
}

/// Biased (V-statistic) HSIC with Gaussian kernels.
pub fn hsic_statistic(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v, 2)?;
    let n = u.len();
    Ok(hsic_trace(&center(&gram(u)?, n), &gram(v)?, None, n))
}

pub fn hsic_test(u: &[f64], v: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    check_pair(u, v, 20)?;
    require_perms(n_perm)?;
    let n = u.len();
    let kc = center(&gram(u)?, n);
    let l = gram(v)?;
    let stat = hsic_trace(&kc, &l, None, n);
    let null = exec::map_range(n_perm, |b| {
        let p = rng::permutation(n, seed, b as u64);
        hsic_trace(&kc, &l, Some(&p), n)
    });
    Ok(finish(TestMethod::Hsic, stat, &null, seed))
}

/// Precomputed x-side structure for repeated Hoeffding evaluations with a
/// permuted y.
struct HoeffdingPlan {
    n: usize,
    rx: Vec<f64>,
    /// Row indices sorted by x, split into groups of equal x.
    groups: Vec<Vec<usize>>,
}

impl HoeffdingPlan {
    fn new(u: &[f64]) -> Self {
        let n = u.len();
        let rx = midranks(u);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            if k > 0 && u[i] == u[order[k - 1]] {
                groups.last_mut().expect("group").push(i);
            } else {
                groups.push(vec![i]);
            }
        }
        HoeffdingPlan { n, rx, groups }
    }

    /// D for y given by its midranks `ry` and dense ranks `dy` (`m` levels).
    fn statistic(&self, ry: &[f64], dy: &[usize], m: usize) -> f64 {
        let n = self.n;
        let mut fen = vec![0u32; m + 1];
        let mut level = vec![0u32; m];
        let mut q = vec![0.0; n];
        let mut in_group: Vec<(usize, usize)> = Vec::new();
        for g in &self.groups {
            in_group.clear();
            in_group.extend(g.iter().map(|&i| (dy[i], i)));
            in_group.sort_unstable();
            let mut a = 0;
            while a < in_group.len() {
                let mut b = a;
                while b + 1 < in_group.len() && in_group[b + 1].0 == in_group[a].0 {
                    b += 1;
                }
                let r = in_group[a].0;
                let mut less = 0u32;
                let mut idx = r;
                while idx > 0 {
                    less += fen[idx];
                    idx &= idx - 1;
                }
                let eq = level[r];
                let less_g = a as f64;
                let eq_g = (b - a) as f64;
                let qv = 1.0 + less as f64 + 0.5 * eq as f64 + 0.5 * less_g + 0.25 * eq_g;
                for &(_, i) in &in_group[a..=b] {
                    q[i] = qv;
                }
                a = b + 1;
            }
            for &(r, _) in in_group.iter() {
                level[r] += 1;
                let mut idx = r + 1;
                while idx <= m {
                    fen[idx] += 1;
                    idx += idx & idx.wrapping_neg();
                }
            }
        }
        hoeffding_from_ranks(&self.rx, ry, &q)
    }
}

fn hoeffding_from_ranks(r: &[f64], s: &[f64], q: &[f64]) -> f64 {
    let n = r.len() as f64;
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    for i in 0..r.len() {
        d1 += (q[i] - 1.0) * (q[i] - 2.0);
        d2 += (r[i] - 1.0) * (r[i] - 2.0) * (s[i] - 1.0) * (s[i] - 2.0);
        d3 += (r[i] - 2.0) * (s[i] - 2.0) * (q[i] - 1.0);
    }
    30.0 * ((n - 2.0) * (n - 3.0) * d1 + d2 - 2.0 * (n - 2.0) * d3)
        / (n * (n - 1.0) * (n - 2.0) * (n - 3.0) * (n - 4.0))
}

/// Hoeffding's D (scaled so that it equals 1 under perfect monotone
/// dependence without ties), computed in O(n log n).
pub fn hoeffding_d(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v, 5)?;
    let plan = HoeffdingPlan::new(u);
    let (dy, m) = dense_ranks(v);
    Ok(plan.statistic(&midranks(v), &dy, m))
}

pub fn hoeffding_d_test(u: &[f64], v: &[f64]) -> Result<TestResult> {
    hoeffding_d_test_with(u, v, DEFAULT_PERMUTATIONS, DEFAULT_SEED)
}

pub fn hoeffding_d_test_with(u: &[f64], v: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    check_pair(u, v, 10)?;
    require_perms(n_perm)?;
    let n = u.len();
    let plan = HoeffdingPlan::new(u);
    let ry = midranks(v);
    let (dy, m) = dense_ranks(v);
    let stat = plan.statistic(&ry, &dy, m);
    let null = exec::map_range(n_perm, |b| {
        let p = rng::permutation(n, seed, b as u64);
        let ryp: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
        let dyp: Vec<usize> = p.iter().map(|&i| dy[i]).collect();
        plan.statistic(&ryp, &dyp, m)
    });
    Ok(finish(TestMethod::HoeffdingD, stat, &null, seed))
}

/// Bivariate test used by the discovery routines: Hoeffding's D above 1000
/// rows, HSIC otherwise.
pub fn pairwise_test(u: &[f64], v: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    if u.len() > 1000 {
        hoeffding_d_test_with(u, v, n_perm, seed)
    } else {
        hsic_test(u, v, n_perm, seed)
    }
}

struct JointPlan {
    n: usize,
    grams: Vec<Vec<f64>>,
    row_means: Vec<Vec<f64>>,
    totals: Vec<f64>,
}

impl JointPlan {
    /// d-variable HSIC with column `k` reindexed by `perms[k]`.
    fn statistic(&self, perms: &[Option<Vec<usize>>]) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let idx = |k: usize, i: usize| perms[k].as_ref().map_or(i, |p| p[i]);
        let mut prod_sum = 0.0;
        let mut row_prod = 0.0;
        let mut prod_row = vec![1.0; n];
        for i in 0..n {
            for k in 0..self.grams.len() {
                prod_row[i] *= self.row_means[k][idx(k, i)];
            }
        }
        let mut prod = vec![1.0; n];
        for i in 0..n {
            prod.iter_mut().for_each(|p| *p = 1.0);
            for (k, g) in self.grams.iter().enumerate() {
                let pi = idx(k, i);
                let row = &g[pi * n..(pi + 1) * n];
                match &perms[k] {
                    None => prod.iter_mut().zip(row).for_each(|(p, r)| *p *= r),
                    Some(perm) => prod.iter_mut().zip(perm).for_each(|(p, &j)| *p *= row[j]),
                }
            }
            prod_sum += prod.iter().sum::<f64>();
            row_prod += prod_row[i];
        }
        let total: f64 = self.totals.iter().product();
        prod_sum / (nf * nf) + total - 2.0 * row_prod / nf
    }
}

/// d-variable HSIC (dHSIC) with column 2..d permuted independently.
pub fn joint_indep_test<C: AsRef<[f64]>>(columns: &[C], n_perm: usize, seed: u64) -> Result<TestResult> {
    if columns.len() < 2 {
        return Err(Error::Precondition(format!("need d >= 2 columns, got {}", columns.len())));
    }
    require_perms(n_perm)?;
    let n = columns[0].as_ref().len();
    for c in columns {
        if c.as_ref().len() != n {
            return Err(Error::LengthMismatch(c.as_ref().len(), n));
        }
    }
    if n < 20 {
        return Err(Error::Precondition(format!("need n >= 20, got {n}")));
    }
    let mut grams = Vec::new();
    for (k, c) in columns.iter().enumerate() {
        check_input(c.as_ref(), &format!("column {k}"))?;
        grams.push(gram(c.as_ref())?);
    }
    let row_means: Vec<Vec<f64>> =
        grams.iter().map(|g| (0..n).map(|i| g[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect()).collect();
    let totals = row_means.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let plan = JointPlan { n, grams, row_means, totals };
    let d = columns.len();
    let stat = plan.statistic(&vec![None; d]);
    let null = exec::map_range(n_perm, |b| {
        let perms: Vec<Option<Vec<usize>>> =
            (0..d).map(|k| (k > 0).then(|| rng::permutation(n, rng::derive_seed(seed, k as u64), b as u64))).collect();
        plan.statistic(&perms)
    });
    Ok(finish(TestMethod::JointPerm, stat, &null, seed))
}

struct AdPlan {
    n_total: usize,
    sizes: Vec<usize>,
    /// Dense rank of every pooled observation.
    level: Vec<usize>,
    mult: Vec<usize>,
}

impl AdPlan {
    /// Midrank k-sample Anderson–Darling statistic A²_akN for the given group
    /// labels.
    fn statistic(&self, labels: &[usize]) -> f64 {
        let k = self.sizes.len();
        let l = self.mult.len();
        let nn = self.n_total as f64;
        let mut f = vec![0usize; k * l];
        for (obs, &g) in labels.iter().enumerate() {
            f[g * l + self.level[obs]] += 1;
        }
        let mut total = 0.0;
        for (i, &ni) in self.sizes.iter().enumerate() {
            let ni = ni as f64;
            let mut b_prev = 0.0;
            let mut m_prev = 0.0;
            let mut inner = 0.0;
            for j in 0..l {
                let lj = self.mult[j] as f64;
                let fij = f[i * l + j] as f64;
                let baj = b_prev + lj / 2.0;
                let maij = m_prev + fij / 2.0;
                let denom = baj * (nn - baj) - nn * lj / 4.0;
                if denom > 0.0 {
                    inner += lj / nn * (nn * maij - ni * baj).powi(2) / denom;
                }
                b_prev += lj;
                m_prev += fij;
            }
            total += inner / ni;
        }
        (nn - 1.0) / nn * total
    }
}

pub fn ad_ksample_test<C: AsRef<[f64]>>(groups: &[C]) -> Result<TestResult> {
    ad_ksample_test_with(groups, DEFAULT_PERMUTATIONS, DEFAULT_SEED)
}

pub fn ad_ksample_test_with<C: AsRef<[f64]>>(groups: &[C], n_perm: usize, seed: u64) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::Precondition(format!("need k >= 2 groups, got {}", groups.len())));
    }
    require_perms(n_perm)?;
    let mut pooled = Vec::new();
    let mut labels = Vec::new();
    let mut sizes = Vec::new();
    for (g, vals) in groups.iter().enumerate() {
        let vals = vals.as_ref();
        if vals.len() < 5 {
            return Err(Error::Precondition(format!("group {g} has {} < 5 observations", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("group {g} contains non-finite values")));
        }
        pooled.extend_from_slice(vals);
        labels.extend(std::iter::repeat_n(g, vals.len()));
        sizes.push(vals.len());
    }
    let (level, nlev) = dense_ranks(&pooled);
    let mut mult = vec![0; nlev];
    for &r in &level {
        mult[r] += 1;
    }
    let plan = AdPlan { n_total: pooled.len(), sizes, level, mult };
    let stat = plan.statistic(&labels);
    let null = exec::map_range(n_perm, |b| {
        let p = rng::permutation(labels.len(), seed, b as u64);
        let shuffled: Vec<usize> = p.iter().map(|&i| labels[i]).collect();
        plan.statistic(&shuffled)
    });
    Ok(finish(TestMethod::AdKsample, stat, &null, seed))
}
