//! Plackett-Luce distillation and its weighted-ListMLE relatives.
//!
//! For student logits `s`, the teacher-optimal ranking `pi` and position
//! weights `alpha`,
//!
//! ```text
//! L(s) = sum_k alpha_k * ( log sum_{l >= k} exp(s[pi_l]) - s[pi_k] )
//! dL/ds_i = sum_{k <= pos(i)} alpha_k * exp(s_i) / sum_{l >= k} exp(s[pi_l]) - alpha_{pos(i)}
//! ```
//!
//! The batch kernel walks the ranking in ascending order (last pick first), so
//! every suffix sum becomes a prefix sum and a single running log-cumulative
//! sum yields all of them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{check_vec, softmax_into, RealMat};
use crate::ranking::{teacher_optimal_into, Ranking};

use super::{check_batch, LossResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `softmax(t / tau_T)` read off in ranking order.
    TeacherSoftmax,
    /// `1 / C` at every position.
    Uniform,
    /// `2^(C-k) - 1` for 1-based position `k`, normalized to sum to one.
    PlistmleExponential,
    /// `(1, 0, ..., 0)`: only the first pick counts.
    OnehotFirst,
}

/// Per-position weights, first pick first.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionWeights {
    pub alpha: Vec<f64>,
    pub scheme: WeightScheme,
}

pub fn make_weights(
    teacher: &[f64],
    pi: &Ranking,
    scheme: WeightScheme,
    teacher_temperature: f64,
) -> Result<PositionWeights> {
    check_vec(teacher)?;
    if teacher.len() != pi.len() {
        return invalid("teacher logits and ranking differ in length");
    }
    if scheme == WeightScheme::TeacherSoftmax
        && !(teacher_temperature.is_finite() && teacher_temperature > 0.0)
    {
        return invalid(format!("teacher temperature must be positive, got {teacher_temperature}"));
    }
    let mut alpha = vec![0.0; teacher.len()];
    let mut scratch = vec![0.0; teacher.len()];
    fill_weights(teacher, pi.order(), scheme, teacher_temperature, &mut alpha, &mut scratch);
    Ok(PositionWeights { alpha, scheme })
}

/// Writes weights in ranking order into `alpha`.
fn fill_weights(
    teacher: &[f64],
    order: &[usize],
    scheme: WeightScheme,
    teacher_temperature: f64,
    alpha: &mut [f64],
    scratch: &mut [f64],
) {
    let c = order.len();
    match scheme {
        WeightScheme::TeacherSoftmax => {
            softmax_into(teacher, teacher_temperature, scratch);
            for (a, &cls) in alpha.iter_mut().zip(order) {
                *a = scratch[cls];
            }
        }
        WeightScheme::Uniform => alpha.fill(1.0 / c as f64),
        WeightScheme::OnehotFirst => {
            alpha.fill(0.0);
            alpha[0] = 1.0;
        }
        WeightScheme::PlistmleExponential => {
            if c == 1 {
                alpha[0] = 1.0;
                return;
            }
            // (2^(C-k) - 1) / (2^C - C - 1), numerator and denominator scaled
            // by 2^-C so nothing overflows for any C.
            let tail = (-(c as f64)).exp2();
            let denom = 1.0 - (c as f64 + 1.0) * tail;
            for (k, a) in alpha.iter_mut().enumerate() {
                *a = ((-(k as f64 + 1.0)).exp2() - tail) / denom;
            }
        }
    }
}

/// Scratch buffers reused across rows of a batch.
struct Workspace {
    order: Vec<usize>,
    asc_s: Vec<f64>,
    asc_w: Vec<f64>,
    /// `exp(asc_s[j] - max_j)`, `max_j` the running maximum of the prefix.
    rel: Vec<f64>,
    /// Prefix sums of `exp(asc_s - max_j)`, in units of `exp(max_j)`.
    sums: Vec<f64>,
    maxes: Vec<f64>,
    alpha: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(c: usize) -> Self {
        Workspace {
            order: Vec::with_capacity(c),
            asc_s: vec![0.0; c],
            asc_w: vec![0.0; c],
            rel: vec![0.0; c],
            sums: vec![0.0; c],
            maxes: vec![0.0; c],
            alpha: vec![0.0; c],
            scratch: vec![0.0; c],
        }
    }
}

/// Batch-mean weighted Plackett-Luce loss of the teacher-optimal ranking.
///
/// Student logits are used as-is; `teacher_temperature` only enters the
/// teacher-softmax weights.
pub fn pld_loss(
    student: &RealMat,
    teacher: &RealMat,
    labels: &[usize],
    teacher_temperature: f64,
    scheme: WeightScheme,
) -> Result<LossResult> {
    if !(teacher_temperature.is_finite() && teacher_temperature > 0.0) {
        return invalid(format!("teacher temperature must be positive, got {teacher_temperature}"));
    }
    check_batch(student, Some(teacher), labels)?;
    let (n, c) = (student.rows(), student.cols());
    let inv_n = 1.0 / n as f64;
    let mut ws = Workspace::new(c);
    let mut grad = RealMat::zeros(n, c);
    let mut total = 0.0;
    for i in 0..n {
        teacher_optimal_into(teacher.row(i), labels[i], &mut ws.order);
        fill_weights(
            teacher.row(i),
            &ws.order,
            scheme,
            teacher_temperature,
            &mut ws.alpha,
            &mut ws.scratch,
        );
        let g = grad.row_mut(i);
        total += ascending_kernel(student.row(i), &mut ws, Some(g));
        g.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok(LossResult { loss: total * inv_n, grad })
}

/// Single-example loss (and optionally gradient) through the ascending-order
/// formulation, for a ranking and weights the caller supplies.
pub fn pld_example_ascending(s: &[f64], pi: &Ranking, alpha: &PositionWeights) -> Result<(f64, Vec<f64>)> {
    check_vec(s)?;
    if s.len() != pi.len() || alpha.alpha.len() != s.len() {
        return invalid("logits, ranking and weights must share a length");
    }
    let mut ws = Workspace::new(s.len());
    ws.order.extend_from_slice(pi.order());
    ws.alpha.copy_from_slice(&alpha.alpha);
    let mut grad = vec![0.0; s.len()];
    let loss = ascending_kernel(s, &mut ws, Some(&mut grad));
    Ok((loss, grad))
}

/// Expects `ws.order` (first pick first) and `ws.alpha` to be filled.
fn ascending_kernel(s: &[f64], ws: &mut Workspace, grad: Option<&mut [f64]>) -> f64 {
    let c = s.len();
    // Position j in ascending order is position c-1-j in ranking order.
    for j in 0..c {
        let k = c - 1 - j;
        ws.asc_s[j] = s[ws.order[k]];
        ws.asc_w[j] = ws.alpha[k];
    }

    // Running log-cumulative-sum-exp: lse_j = max_j + ln(sums_j).
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut loss = 0.0;
    for j in 0..c {
        let a = ws.asc_s[j];
        let rel = if a > max {
            sum *= (max - a).exp();
            max = a;
            1.0
        } else {
            (a - max).exp()
        };
        sum += rel;
        ws.rel[j] = rel;
        ws.sums[j] = sum;
        ws.maxes[j] = max;
        loss += ws.asc_w[j] * (max + sum.ln() - a);
    }

    if let Some(grad) = grad {
        // acc_j = sum_{i >= j} w_i exp(lse_j - lse_i), built from the top; the
        // ratio exp(lse_j - lse_{j+1}) needs an exp only where the max moved.
        let mut acc = 0.0;
        for j in (0..c).rev() {
            if j + 1 < c {
                let mut ratio = ws.sums[j] / ws.sums[j + 1];
                if ws.maxes[j] != ws.maxes[j + 1] {
                    ratio *= (ws.maxes[j] - ws.maxes[j + 1]).exp();
                }
                acc *= ratio;
            }
            acc += ws.asc_w[j];
            // exp(a_j - lse_j) = rel_j / sums_j
            grad[ws.order[c - 1 - j]] = ws.rel[j] / ws.sums[j] * acc - ws.asc_w[j];
        }
    }
    loss
}

/// Gradient of the single-example weighted loss, evaluated as
/// `exp(s_i) * sum_{k <= pos(i)} alpha_k / Z_k - alpha_{pos(i)}` with the running
/// sum of `alpha_k / Z_k` kept in the log domain.
pub fn pld_gradient_closed_form(s: &[f64], pi: &Ranking, alpha: &PositionWeights) -> Result<Vec<f64>> {
    check_vec(s)?;
    let c = s.len();
    if pi.len() != c || alpha.alpha.len() != c {
        return invalid("logits, ranking and weights must share a length");
    }
    let order = pi.order();

    // log Z_k = log sum_{l >= k} exp(s[pi_l]), by a backward pass.
    let mut log_z = vec![0.0; c];
    let mut running = f64::NEG_INFINITY;
    for k in (0..c).rev() {
        running = log_add_exp(running, s[order[k]]);
        log_z[k] = running;
    }

    let mut grad = vec![0.0; c];
    // log sum_{k' <= k} alpha_k' / Z_k'
    let mut log_acc = f64::NEG_INFINITY;
    for k in 0..c {
        let a = alpha.alpha[k];
        if a > 0.0 {
            log_acc = log_add_exp(log_acc, a.ln() - log_z[k]);
        }
        let i = order[k];
        grad[i] = (s[i] + log_acc).exp() - a;
    }
    Ok(grad)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
