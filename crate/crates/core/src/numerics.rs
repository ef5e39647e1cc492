//! Stable numerical primitives shared by every loss kernel.
//!
//! Everything here is `f64`. Public entry points validate their input (non-empty,
//! finite); the `*_unchecked` variants are for callers that already validated a
//! whole batch through [`RealMat`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVec(Vec<f64>);

impl RealVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_vec(&values)?;
        Ok(RealVec(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::ops::Deref for RealVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major `rows x cols` matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMat {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl RealMat {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return invalid(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite matrix entry at flat index {i}"));
        }
        Ok(RealMat { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMat {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        RealMat::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; an empty-column matrix has no meaningful rows.
        self.values.chunks_exact(self.cols.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the raw buffer. Callers must keep entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Select rows by index, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> RealMat {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        RealMat {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealMat {
        RealMat {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Ascending,
    Descending,
}

pub(crate) fn check_vec(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return invalid("empty vector");
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return invalid(format!("non-finite entry at index {i}"));
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return invalid(format!("temperature must be positive and finite, got {t}"));
    }
    Ok(())
}

pub fn softmax(v: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_vec(v)?;
    let mut out = vec![0.0; v.len()];
    softmax_into(v, temperature, &mut out);
    Ok(out)
}

/// Max-subtracted softmax of `v / temperature` written into `out`.
pub(crate) fn softmax_into(v: &[f64], temperature: f64, out: &mut [f64]) {
    let inv_t = 1.0 / temperature;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = ((x - max) * inv_t).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn log_softmax(v: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_vec(v)?;
    let mut out = vec![0.0; v.len()];
    log_softmax_into(v, temperature, &mut out);
    Ok(out)
}

pub(crate) fn log_softmax_into(v: &[f64], temperature: f64, out: &mut [f64]) {
    let inv_t = 1.0 / temperature;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max) * inv_t;
        sum += o.exp();
    }
    let log_z = sum.ln();
    out.iter_mut().for_each(|o| *o -= log_z);
}

pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    check_vec(v)?;
    Ok(log_sum_exp_unchecked(v))
}

pub(crate) fn log_sum_exp_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `out[j] = log(sum_{i <= j} exp(v[i]))`.
pub fn log_cumsum_exp(v: &[f64]) -> Result<Vec<f64>> {
    check_vec(v)?;
    let mut out = vec![0.0; v.len()];
    log_cumsum_exp_into(v, &mut out);
    Ok(out)
}

/// Running max-rescaled accumulation: the partial sum is kept relative to the
/// largest value seen so far, so no `exp` ever sees a positive argument.
pub(crate) fn log_cumsum_exp_into(v: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    let mut scaled = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        if x > max {
            scaled = scaled * (max - x).exp() + 1.0;
            max = x;
        } else {
            scaled += (x - max).exp();
        }
        *o = max + scaled.ln();
    }
}

/// Stable argsort: equal values keep the lower original index first, in
/// either direction.
pub fn argsort_stable(v: &[f64], order: SortOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    argsort_into(v, order, &mut idx);
    idx
}

pub(crate) fn argsort_into(v: &[f64], order: SortOrder, idx: &mut Vec<usize>) {
    // Sorting packed (key, index) integers is equivalent to a stable sort on
    // the values and much cheaper than an indirect float comparator.
    let mut packed: Vec<u128> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let key = match order {
                SortOrder::Ascending => order_key(x),
                SortOrder::Descending => !order_key(x),
            };
            (u128::from(key) << 64) | i as u128
        })
        .collect();
    packed.sort_unstable();
    idx.clear();
    idx.extend(packed.iter().map(|&p| p as u64 as usize));
}

/// Monotone map from non-NaN floats to integers; `-0.0` and `0.0` collide.
fn order_key(x: f64) -> u64 {
    let bits = (x + 0.0).to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = x * w^T + b` for `x: n x d_in`, `w: d_out x d_in` (row-major), `b: d_out`.
pub fn affine_rows(x: &[f64], n: usize, d_in: usize, w: &[f64], b: &[f64], out: &mut [f64]) {
    let d_out = b.len();
    debug_assert_eq!(x.len(), n * d_in);
    debug_assert_eq!(w.len(), d_out * d_in);
    debug_assert_eq!(out.len(), n * d_out);
    for (xr, or) in x.chunks_exact(d_in).zip(out.chunks_exact_mut(d_out)) {
        for ((o, wr), &bias) in or.iter_mut().zip(w.chunks_exact(d_in)).zip(b) {
            *o = bias + dot(xr, wr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[3f64.ln(), 0.0], 1.0).unwrap();
        assert!(close(p[0], 0.75, 1e-15) && close(p[1], 0.25, 1e-15));
        let p = softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(close(p[0], 1.0, 1e-15) && p[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax(&[0.0], 0.0).is_err());
        assert!(softmax(&[0.0], -1.0).is_err());
        assert!(softmax(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(softmax(&[f64::INFINITY], 1.0).is_err());
        assert!(softmax(&[], 1.0).is_err());
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!(close(log_sum_exp(&[0.0, 0.0]).unwrap(), LN_2, 1e-15));
        for x in [-700.0, -3.5, 0.0, 12.25, 700.0] {
            assert_eq!(log_sum_exp(&[x]).unwrap(), x);
        }
        assert!(close(log_sum_exp(&[1000.0, 1000.0]).unwrap(), 1000.0 + LN_2, 1e-12));
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn log_cumsum_exp_examples() {
        let out = log_cumsum_exp(&[0.0, 0.0]).unwrap();
        assert_eq!(out[0], 0.0);
        assert!(close(out[1], LN_2, 1e-15));
        let out = log_cumsum_exp(&[0.0, 0.0, 0.0]).unwrap();
        assert!(close(out[2], 3f64.ln(), 1e-15));
        assert!(log_cumsum_exp(&[]).is_err());
    }

    #[test]
    fn log_cumsum_exp_matches_naive_prefix() {
        let mut rng = crate::rng::Rng::new(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..8).map(|_| 5.0 * rng.normal()).collect();
            let fast = log_cumsum_exp(&v).unwrap();
            for j in 0..8 {
                // naive oracle: direct prefix sums of exp
                let naive = v[..=j].iter().map(|x| x.exp()).sum::<f64>().ln();
                assert!((fast[j] - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            }
        }
    }

    #[test]
    fn log_cumsum_exp_handles_large_magnitudes() {
        let out = log_cumsum_exp(&[-1000.0, 1000.0, 1000.0, -5000.0]).unwrap();
        assert!(out.iter().all(|x| x.is_finite()));
        assert_eq!(out[0], -1000.0);
        assert!(close(out[2], 1000.0 + LN_2, 1e-12));
        assert!(close(out[3], 1000.0 + LN_2, 1e-12));
    }

    #[test]
    fn argsort_examples() {
        assert_eq!(argsort_stable(&[0.1, 2.0, -1.0], SortOrder::Descending), vec![1, 0, 2]);
        assert_eq!(argsort_stable(&[1.0, 1.0, 0.0], SortOrder::Descending), vec![0, 1, 2]);
        assert_eq!(argsort_stable(&[5.0], SortOrder::Ascending), vec![0]);
        assert_eq!(argsort_stable(&[1.0, 0.0, 1.0, 0.0], SortOrder::Ascending), vec![1, 3, 0, 2]);
        assert_eq!(argsort_stable(&[0.0, -0.0], SortOrder::Descending), vec![0, 1]);
    }

    #[test]
    fn realmat_validates() {
        assert!(RealMat::new(2, 2, vec![0.0; 3]).is_err());
        assert!(RealMat::new(1, 2, vec![0.0, f64::NAN]).is_err());
        let m = RealMat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.gather_rows(&[1, 0]).as_slice(), &[3.0, 4.0, 1.0, 2.0]);
        assert!(RealVec::new(vec![]).is_err());
    }

    #[test]
    fn affine_rows_small() {
        // x = [[1, 2]], w = [[1, 0], [0, 1], [1, 1]], b = [0.5, 0, -1]
        let mut out = vec![0.0; 3];
        affine_rows(&[1.0, 2.0], 1, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[0.5, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![1.5, 2.0, 2.0]);
    }

    fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-300.0f64..300.0, 1..max_len)
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in finite_vec(40), t in 0.05f64..20.0) {
            let p = softmax(&v, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn softmax_translation_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..30),
                                         c in -100.0f64..100.0, t in 0.1f64..10.0) {
            let p = softmax(&v, t).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted, t).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cumsum_tail_is_total(v in finite_vec(64)) {
            let c = log_cumsum_exp(&v).unwrap();
            let total = log_sum_exp(&v).unwrap();
            prop_assert!((c[c.len() - 1] - total).abs() <= 1e-12 * total.abs().max(1.0));
        }

        #[test]
        fn argsort_is_monotone_bijection(v in prop::collection::vec(-5i32..5, 1..40)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            for order in [SortOrder::Ascending, SortOrder::Descending] {
                let idx = argsort_stable(&v, order);
                let mut seen = idx.clone();
                seen.sort();
                prop_assert_eq!(seen, (0..v.len()).collect::<Vec<_>>());
                for w in idx.windows(2) {
                    let (a, b) = (v[w[0]], v[w[1]]);
                    match order {
                        SortOrder::Ascending => prop_assert!(a <= b),
                        SortOrder::Descending => prop_assert!(a >= b),
                    }
                    if a == b {
                        prop_assert!(w[0] < w[1]);
                    }
                }
            }
        }

        #[test]
        fn argsort_matches_std_stable_sort(v in prop::collection::vec(-1e300f64..1e300, 1..60), dup in 0usize..60) {
            let mut v = v;
            // force some ties, including signed zeros
            let n = v.len();
            v[dup % n] = v[0];
            v.push(0.0);
            v.push(-0.0);
            let mut up: Vec<usize> = (0..v.len()).collect();
            up.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            let mut down: Vec<usize> = (0..v.len()).collect();
            down.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
            prop_assert_eq!(argsort_stable(&v, SortOrder::Ascending), up);
            prop_assert_eq!(argsort_stable(&v, SortOrder::Descending), down);
        }
    }
}
