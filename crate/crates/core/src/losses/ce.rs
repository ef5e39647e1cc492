use crate::error::{invalid, Result};
use crate::numerics::{log_sum_exp_unchecked, softmax_into, RealMat};

use super::{check_batch, LossResult};

/// Mean cross-entropy `-s_y + log sum_j exp(s_j)`.
pub fn ce_loss(student: &RealMat, labels: &[usize]) -> Result<LossResult> {
    ls_loss(student, labels, 0.0)
}

/// Cross-entropy against `(1 - eps) * onehot(y) + eps / C`.
pub fn ls_loss(student: &RealMat, labels: &[usize], epsilon: f64) -> Result<LossResult> {
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("label smoothing epsilon must lie in [0, 1), got {epsilon}"));
    }
    check_batch(student, None, labels)?;
    let (n, c) = (student.rows(), student.cols());
    let inv_n = 1.0 / n as f64;
    let off = epsilon / c as f64;
    let mut grad = RealMat::zeros(n, c);
    let mut total = 0.0;
    for (i, (s, &y)) in student.iter_rows().zip(labels).enumerate() {
        let lse = log_sum_exp_unchecked(s);
        let target_dot = if epsilon == 0.0 {
            s[y]
        } else {
            (1.0 - epsilon) * s[y] + off * s.iter().sum::<f64>()
        };
        total += lse - target_dot;

        let g = grad.row_mut(i);
        softmax_into(s, 1.0, g);
        for v in g.iter_mut() {
            *v = (*v - off) * inv_n;
        }
        g[y] -= (1.0 - epsilon) * inv_n;
    }
    Ok(LossResult { loss: total * inv_n, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::gradcheck::grad_check;
    use crate::rng::Rng;

    #[test]
    fn symmetric_two_class() {
        let s = RealMat::new(1, 2, vec![0.0, 0.0]).unwrap();
        let r = ce_loss(&s, &[0]).unwrap();
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(r.grad.as_slice(), &[-0.5, 0.5]);

        let s2 = RealMat::new(2, 2, vec![0.0; 4]).unwrap();
        let r = ce_loss(&s2, &[0, 0]).unwrap();
        assert_eq!(r.grad.row(0), &[-0.25, 0.25]);
    }

    #[test]
    fn confident_prediction() {
        let s = RealMat::new(1, 2, vec![10.0, -10.0]).unwrap();
        let r = ce_loss(&s, &[0]).unwrap();
        // log(1 + e^-20)
        assert!((r.loss - (-20f64).exp().ln_1p()).abs() < 1e-14);
        assert!((r.loss - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn label_out_of_range() {
        let s = RealMat::zeros(1, 3);
        assert!(ce_loss(&s, &[3]).is_err());
        assert!(ls_loss(&s, &[0], 1.0).is_err());
        assert!(ls_loss(&s, &[0], -0.1).is_err());
    }

    #[test]
    fn smoothing_zero_is_ce() {
        let mut rng = Rng::new(1);
        let s = RealMat::new(4, 10, rng.normal_vec(40)).unwrap();
        let labels = [1, 9, 0, 4];
        let a = ce_loss(&s, &labels).unwrap();
        let b = ls_loss(&s, &labels, 0.0).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (x, y) in a.grad.as_slice().iter().zip(b.grad.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_on_uniform_logits_is_log_c() {
        let s = RealMat::new(1, 2, vec![0.0, 0.0]).unwrap();
        let r = ls_loss(&s, &[0], 0.1).unwrap();
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(2);
        let s = RealMat::new(1, 10, rng.normal_vec(10)).unwrap();
        let ce = grad_check(|m| ce_loss(m, &[3]), &s, 1e-5).unwrap();
        assert!(ce.max_rel_error < 1e-6, "{ce:?}");
        let ls = grad_check(|m| ls_loss(m, &[3], 0.1), &s, 1e-5).unwrap();
        assert!(ls.max_rel_error < 1e-6, "{ls:?}");
    }
}
