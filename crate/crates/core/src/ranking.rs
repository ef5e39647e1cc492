//! Plackett-Luce permutation model over class logits.
//!
//! A [`Ranking`] is stored first-pick-first: `order[0]` is the class chosen
//! first. Under logits `s` the probability of a ranking is
//!
//! ```text
//! P(pi | s) = prod_k exp(s[pi_k]) / sum_{l >= k} exp(s[pi_l])
//! ```

use crate::error::{invalid, Error, Result};
use crate::numerics::{argsort_into, check_vec, log_cumsum_exp_into, log_sum_exp_unchecked, SortOrder};

/// Largest class count accepted by [`pl_enumerate`] (8! = 40320 rankings).
pub const MAX_ENUMERATE_CLASSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &c in &order {
            if c >= order.len() || seen[c] {
                return invalid(format!("{order:?} is not a permutation of 0..{}", order.len()));
            }
            seen[c] = true;
        }
        Ok(Ranking { order })
    }

    pub(crate) fn from_order_unchecked(order: Vec<usize>) -> Self {
        Ranking { order }
    }

    pub fn identity(len: usize) -> Self {
        Ranking { order: (0..len).collect() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `positions()[c]` is the position at which class `c` is picked.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &c) in self.order.iter().enumerate() {
            pos[c] = k;
        }
        pos
    }

    /// Gather `values` into ranking order.
    pub fn permute(&self, values: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&c| values[c]).collect()
    }
}

/// One (teacher, student, label) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub teacher_logits: Vec<f64>,
    pub student_logits: Vec<f64>,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(teacher_logits: Vec<f64>, student_logits: Vec<f64>, label: usize) -> Result<Self> {
        check_vec(&teacher_logits)?;
        check_vec(&student_logits)?;
        if teacher_logits.len() != student_logits.len() {
            return invalid("teacher and student logits differ in length");
        }
        if label >= teacher_logits.len() {
            return invalid(format!("label {label} out of range for {} classes", teacher_logits.len()));
        }
        Ok(LabeledExample { teacher_logits, student_logits, label })
    }

    pub fn teacher_optimal_permutation(&self) -> Ranking {
        let mut order = Vec::with_capacity(self.teacher_logits.len());
        teacher_optimal_into(&self.teacher_logits, self.label, &mut order);
        Ranking::from_order_unchecked(order)
    }
}

/// The ranking that picks the true label first, then every other class by
/// descending teacher logit (ties keep the lower class index first).
pub fn teacher_optimal_permutation(teacher: &[f64], label: usize) -> Result<Ranking> {
    check_vec(teacher)?;
    if label >= teacher.len() {
        return invalid(format!("label {label} out of range for {} classes", teacher.len()));
    }
    let mut order = Vec::with_capacity(teacher.len());
    teacher_optimal_into(teacher, label, &mut order);
    Ok(Ranking::from_order_unchecked(order))
}

pub(crate) fn teacher_optimal_into(teacher: &[f64], label: usize, order: &mut Vec<usize>) {
    argsort_into(teacher, SortOrder::Descending, order);
    let at = order.iter().position(|&c| c == label).expect("label in range");
    // Rotate the label to the front; the rest keeps its descending order.
    order[..=at].rotate_right(1);
}

/// `log P(pi | s)`, via one log-cumulative-sum over the reversed ranking.
pub fn pl_log_likelihood(s: &[f64], pi: &Ranking) -> Result<f64> {
    check_vec(s)?;
    if s.len() != pi.len() {
        return invalid(format!("{} logits but ranking of length {}", s.len(), pi.len()));
    }
    Ok(pl_log_likelihood_unchecked(s, pi.order()))
}

pub(crate) fn pl_log_likelihood_unchecked(s: &[f64], order: &[usize]) -> f64 {
    // Last pick first: prefix sums of the reversed order are suffix sums of
    // the forward order.
    let reversed: Vec<f64> = order.iter().rev().map(|&c| s[c]).collect();
    let mut lse = vec![0.0; reversed.len()];
    log_cumsum_exp_into(&reversed, &mut lse);
    reversed.iter().zip(&lse).map(|(x, z)| x - z).sum()
}

/// Every ranking of `s.len()` classes with its probability, in
/// lexicographic order of `order`.
pub fn pl_enumerate(s: &[f64]) -> Result<Vec<(Ranking, f64)>> {
    check_vec(s)?;
    if s.len() > MAX_ENUMERATE_CLASSES {
        return Err(Error::SizeLimit {
            what: "classes",
            got: s.len(),
            max: MAX_ENUMERATE_CLASSES,
        });
    }
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..s.len()).collect();
    loop {
        let p = pl_log_likelihood_unchecked(s, &order).exp();
        out.push((Ranking::from_order_unchecked(order.clone()), p));
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(out)
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("pivot exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Position-weighted negative log-likelihood evaluated term by term:
/// `sum_k w_k * (log sum_{l >= k} exp(s[pi_l]) - s[pi_k])`.
///
/// Quadratic in the class count; used as the direct reference for the
/// linear-time kernels in `losses`.
pub fn weighted_suffix_nll(s: &[f64], pi: &Ranking, weights: &[f64]) -> Result<f64> {
    check_vec(s)?;
    if s.len() != pi.len() || weights.len() != s.len() {
        return invalid("logits, ranking and weights must share a length");
    }
    let permuted = pi.permute(s);
    Ok((0..permuted.len())
        .map(|k| weights[k] * (log_sum_exp_unchecked(&permuted[k..]) - permuted[k]))
        .sum())
}
