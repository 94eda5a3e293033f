//! B-spline bases with linear extrapolation beyond the boundary knots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 5;

/// B-spline basis defined by strictly ascending breakpoints (boundary knots
/// included) and a degree. It has `breakpoints.len() + degree - 1` functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    degree: usize,
    #[serde(skip)]
    augmented: Vec<f64>,
}

/// Non-zero basis values at one point: functions `start..start + len`.
#[derive(Clone, Copy, Debug)]
pub struct BasisRow {
    pub start: usize,
    pub len: usize,
    pub values: [f64; MAX_DEGREE + 2],
}

impl BasisRow {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.start + k, self.values[k]))
    }
}

impl BSplineBasis {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::Precondition(format!("spline degree must be in 1..={MAX_DEGREE}")));
        }
        if knots.len() < 2 || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Precondition("need at least two finite knots".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition("knots must be strictly ascending".into()));
        }
        let mut basis = BSplineBasis { knots, degree, augmented: Vec::new() };
        basis.rebuild();
        Ok(basis)
    }

    /// Breakpoints at the empirical quantiles of `x`: the boundary knots are
    /// min/max and `interior` knots sit at the `j / (interior + 1)` quantiles.
    /// Tied quantiles are merged.
    pub fn from_quantiles(x: &[f64], interior: usize, degree: usize) -> Result<Self> {
        let mut sorted: Vec<f64> = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if !(hi > lo) {
            return Err(Error::DegenerateCovariate(format!("covariate is constant ({lo})")));
        }
        let mut knots = vec![lo];
        for j in 1..=interior {
            let q = quantile_sorted(&sorted, j as f64 / (interior + 1) as f64);
            let last = *knots.last().unwrap();
            if q > last && q < hi {
                knots.push(q);
            }
        }
        knots.push(hi);
        Self::new(knots, degree)
    }

    fn rebuild(&mut self) {
        let p = self.degree;
        let mut aug = Vec::with_capacity(self.knots.len() + 2 * p);
        aug.extend(std::iter::repeat_n(self.knots[0], p));
        aug.extend_from_slice(&self.knots);
        aug.extend(std::iter::repeat_n(*self.knots.last().unwrap(), p));
        self.augmented = aug;
    }

    /// Restore the cached augmented knot vector after deserialisation.
    pub fn ensure_ready(&mut self) {
        if self.augmented.is_empty() {
            self.rebuild();
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.knots.len() + self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Index `s` of the knot span containing `x` in the augmented vector,
    /// i.e. `aug[s] <= x < aug[s + 1]` (closed at the right boundary).
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let m = self.knots.len();
        // spans live in p..p + m - 1
        let last = p + m - 2;
        if x >= self.augmented[last + 1] {
            return last;
        }
        if x <= self.augmented[p] {
            return p;
        }
        let inner = &self.knots[1..m - 1];
        p + inner.partition_point(|&k| k <= x)
    }

    /// Cox–de Boor values (and first derivatives) of the `p + 1` functions
    /// that are non-zero on span `s`, evaluated at `x`.
    fn basis_funs(&self, s: usize, x: f64) -> ([f64; MAX_DEGREE + 1], [f64; MAX_DEGREE + 1]) {
        let p = self.degree;
        let t = &self.augmented;
        let mut n = [0.0; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        let mut lower = [0.0; MAX_DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = n[r] / denom;
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
            if j == p - 1 {
                lower[..p].copy_from_slice(&n[..p]);
            }
        }
        if p == 1 {
            lower[0] = 1.0;
        }
        // derivative from the degree p - 1 values
        let mut d = [0.0; MAX_DEGREE + 1];
        for k in 0..=p {
            let i = s - p + k;
            let mut v = 0.0;
            if k >= 1 {
                let denom = t[i + p] - t[i];
                if denom > 0.0 {
                    v += lower[k - 1] / denom;
                }
            }
            if k < p {
                let denom = t[i + p + 1] - t[i + 1];
                if denom > 0.0 {
                    v -= lower[k] / denom;
                }
            }
            d[k] = p as f64 * v;
        }
        (n, d)
    }

    /// Non-zero basis values at `x`. Outside the boundary knots each function
    /// is continued linearly from its value and slope at the boundary.
    pub fn eval(&self, x: f64) -> BasisRow {
        let p = self.degree;
        let (lo, hi) = self.range();
        let (xb, extra) = if x < lo {
            (lo, x - lo)
        } else if x > hi {
            (hi, x - hi)
        } else {
            (x, 0.0)
        };
        let s = self.span(xb);
        let (n, d) = self.basis_funs(s, xb);
        let mut values = [0.0; MAX_DEGREE + 2];
        for k in 0..=p {
            values[k] = n[k] + if extra != 0.0 { d[k] * extra } else { 0.0 };
        }
        BasisRow { start: s - p, len: p + 1, values }
    }

    /// Dense row of all basis values at `x`.
    pub fn eval_dense(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (j, v) in self.eval(x).iter() {
            out[j] = v;
        }
        out
    }

    pub fn is_outside(&self, x: f64) -> bool {
        let (lo, hi) = self.range();
        x < lo || x > hi
    }
}

/// Second-difference penalty matrix `DᵀD` for `m` coefficients (zero when
/// `m < 3`), stored dense row-major.
pub fn second_difference_penalty(m: usize) -> Vec<f64> {
    let mut s = vec![0.0; m * m];
    if m < 3 {
        return s;
    }
    for r in 0..m - 2 {
        let d = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
        for &(i, a) in &d {
            for &(j, b) in &d {
                s[i * m + j] += a * b;
            }
        }
    }
    s
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Recursive Cox–de Boor definition, used as an independent oracle.
    fn naive(t: &[f64], i: usize, p: usize, x: f64, right_end: f64) -> f64 {
        if p == 0 {
            let inside = t[i] <= x && x < t[i + 1];
            let at_end = x == right_end && t[i] < t[i + 1] && t[i + 1] == right_end;
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if t[i + p] > t[i] {
            v += (x - t[i]) / (t[i + p] - t[i]) * naive(t, i, p - 1, x, right_end);
        }
        if t[i + p + 1] > t[i + 1] {
            v += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * naive(t, i + 1, p - 1, x, right_end);
        }
        v
    }

    #[test]
    fn matches_recursive_definition_and_partition_of_unity() {
        let b = BSplineBasis::new(vec![0.0, 0.5, 1.3, 2.0, 4.0], 3).unwrap();
        assert_eq!(b.len(), 7);
        for k in 0..=80 {
            let x = 4.0 * k as f64 / 80.0;
            let row = b.eval_dense(x);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "x={x}");
            for (i, v) in row.iter().enumerate() {
                let o = naive(&b.augmented, i, 3, x, 4.0);
                assert!((v - o).abs() < 1e-12, "x={x} i={i}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = BSplineBasis::new(vec![0.0, 0.5, 1.3, 2.0, 4.0], 3).unwrap();
        for &x in &[0.2, 0.9, 1.7, 3.1] {
            let s = b.span(x);
            let (_, d) = b.basis_funs(s, x);
            let h = 1e-6;
            let up = b.eval_dense(x + h);
            let dn = b.eval_dense(x - h);
            for k in 0..=3 {
                let i = s - 3 + k;
                let fd = (up[i] - dn[i]) / (2.0 * h);
                assert!((d[k] - fd).abs() < 1e-5, "x={x} k={k}");
            }
        }
    }

    #[test]
    fn linear_extrapolation_outside_range() {
        let b = BSplineBasis::new(vec![0.0, 1.0, 2.0], 3).unwrap();
        let coef: Vec<f64> = (0..b.len()).map(|i| (i as f64).sin()).collect();
        let f = |x: f64| -> f64 { b.eval(x).iter().map(|(j, v)| coef[j] * v).sum() };
        // second difference vanishes outside the range
        for &x in &[-3.0, -1.0, 2.5, 6.0] {
            let second = f(x + 0.3) - 2.0 * f(x) + f(x - 0.3);
            if x + 0.3 < 0.0 || x - 0.3 > 2.0 {
                assert!(second.abs() < 1e-12, "x={x}");
            }
        }
        // continuous at the boundary
        assert!((f(2.0) - f(2.0 + 1e-9)).abs() < 1e-8);
        assert!(b.is_outside(-0.1) && !b.is_outside(1.0));
    }

    #[test]
    fn degree_one_without_interior_knots_is_linear() {
        let b = BSplineBasis::new(vec![1.0, 3.0], 1).unwrap();
        assert_eq!(b.len(), 2);
        let r = b.eval_dense(2.0);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        let r = b.eval_dense(5.0);
        assert!((r[0] + 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_knots() {
        let x: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let b = BSplineBasis::from_quantiles(&x, 3, 3).unwrap();
        assert_eq!(b.knots(), &[0.0, 25.0, 50.0, 75.0, 100.0]);
        assert!(matches!(BSplineBasis::from_quantiles(&[2.0; 40], 10, 3), Err(Error::DegenerateCovariate(_))));
        assert!(BSplineBasis::new(vec![0.0, 0.0, 1.0], 3).is_err());
    }

    #[test]
    fn penalty_annihilates_linear_coefficients() {
        let m = 6;
        let s = second_difference_penalty(m);
        let lin: Vec<f64> = (0..m).map(|i| 2.0 + 0.5 * i as f64).collect();
        for i in 0..m {
            let v: f64 = (0..m).map(|j| s[i * m + j] * lin[j]).sum();
            assert!(v.abs() < 1e-12);
        }
    }
}
