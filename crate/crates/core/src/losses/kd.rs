use crate::error::{invalid, Result};
use crate::numerics::{log_softmax_into, log_sum_exp_unchecked, softmax_into, RealMat};

use super::{check_batch, Divergence, LossResult};

/// `ce_mix * CE(s, y) + (1 - ce_mix) * tau^2 * D(q_T, q_S)` with `q = softmax(. / tau)`.
///
/// `D` is `KL(q_T || q_S)`, `KL(q_S || q_T)`, or the Jensen-Shannon divergence
/// `KL(q_T || m)/2 + KL(q_S || m)/2` with `m = (q_T + q_S)/2`.
pub fn kd_loss(
    student: &RealMat,
    teacher: &RealMat,
    labels: &[usize],
    ce_mix: f64,
    temperature: f64,
    divergence: Divergence,
) -> Result<LossResult> {
    if !(0.0..=1.0).contains(&ce_mix) {
        return invalid(format!("ce_mix must lie in [0, 1], got {ce_mix}"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return invalid(format!("temperature must be positive, got {temperature}"));
    }
    check_batch(student, Some(teacher), labels)?;

    let (n, c) = (student.rows(), student.cols());
    let inv_n = 1.0 / n as f64;
    let kd_scale = (1.0 - ce_mix) * temperature * temperature;
    let mut grad = RealMat::zeros(n, c);
    let mut total = 0.0;

    let mut log_qs = vec![0.0; c];
    let mut log_qt = vec![0.0; c];
    let mut qs = vec![0.0; c];
    let mut dz = vec![0.0; c];

    for i in 0..n {
        let (s, t, y) = (student.row(i), teacher.row(i), labels[i]);
        log_softmax_into(s, temperature, &mut log_qs);
        log_softmax_into(t, temperature, &mut log_qt);
        qs.iter_mut().zip(&log_qs).for_each(|(q, l)| *q = l.exp());

        // Divergence value and its gradient with respect to z = s / tau.
        let d = match divergence {
            Divergence::ForwardKl => {
                let mut d = 0.0;
                for j in 0..c {
                    let qt = log_qt[j].exp();
                    d += qt * (log_qt[j] - log_qs[j]);
                    dz[j] = qs[j] - qt;
                }
                d
            }
            Divergence::ReverseKl => {
                let d: f64 = (0..c).map(|j| qs[j] * (log_qs[j] - log_qt[j])).sum();
                for j in 0..c {
                    dz[j] = qs[j] * (log_qs[j] - log_qt[j] - d);
                }
                d
            }
            Divergence::Js => {
                let mut d = 0.0;
                let mut mean_g = 0.0;
                for j in 0..c {
                    let log_m = log_add_exp(log_qs[j], log_qt[j]) - std::f64::consts::LN_2;
                    let qt = log_qt[j].exp();
                    d += 0.5 * (qt * (log_qt[j] - log_m) + qs[j] * (log_qs[j] - log_m));
                    // dJS/dq_S = log(q_S / m) / 2
                    dz[j] = 0.5 * (log_qs[j] - log_m);
                    mean_g += qs[j] * dz[j];
                }
                for j in 0..c {
                    dz[j] = qs[j] * (dz[j] - mean_g);
                }
                d
            }
        };

        let lse = log_sum_exp_unchecked(s);
        total += ce_mix * (lse - s[y]) + kd_scale * d;

        let g = grad.row_mut(i);
        softmax_into(s, 1.0, g);
        g[y] -= 1.0;
        // dz/ds = 1/tau
        let chain = kd_scale / temperature;
        for j in 0..c {
            g[j] = (ce_mix * g[j] + chain * dz[j]) * inv_n;
        }
    }
    Ok(LossResult { loss: total * inv_n, grad })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Mean over rows of `KL(softmax(t) || softmax(s))`.
pub fn student_teacher_kl(student: &RealMat, teacher: &RealMat) -> Result<f64> {
    if student.rows() != teacher.rows() || student.cols() != teacher.cols() {
        return invalid("student and teacher batches differ in shape");
    }
    if student.rows() == 0 || student.cols() == 0 {
        return invalid("empty logit batch");
    }
    let c = student.cols();
    let mut log_qs = vec![0.0; c];
    let mut log_qt = vec![0.0; c];
    let mut total = 0.0;
    for (s, t) in student.iter_rows().zip(teacher.iter_rows()) {
        log_softmax_into(s, 1.0, &mut log_qs);
        log_softmax_into(t, 1.0, &mut log_qt);
        let kl: f64 = log_qt
            .iter()
            .zip(&log_qs)
            .map(|(lt, ls)| lt.exp() * (lt - ls))
            .sum();
        // Rounding can leave a tiny negative value for identical rows.
        total += kl.max(0.0);
    }
    Ok(total / student.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ce_loss, grad_check};
    use crate::rng::Rng;

    const DIVERGENCES: [Divergence; 3] = [Divergence::ForwardKl, Divergence::ReverseKl, Divergence::Js];

    fn random(rng: &mut Rng, n: usize, c: usize, scale: f64) -> RealMat {
        RealMat::new(n, c, rng.normal_vec(n * c).into_iter().map(|x| scale * x).collect()).unwrap()
    }

    #[test]
    fn identical_logits_give_zero() {
        let mut rng = Rng::new(3);
        let s = random(&mut rng, 3, 6, 2.0);
        for d in DIVERGENCES {
            for tau in [0.5, 1.0, 4.0] {
                let r = kd_loss(&s, &s, &[0, 1, 2], 0.0, tau, d).unwrap();
                assert!(r.loss.abs() < 1e-12, "{d:?} {tau}: {}", r.loss);
                assert!(r.grad.as_slice().iter().all(|g| g.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn identical_logits_leave_only_ce() {
        let mut rng = Rng::new(4);
        let s = random(&mut rng, 2, 5, 1.0);
        let ce = ce_loss(&s, &[1, 4]).unwrap().loss;
        for d in DIVERGENCES {
            let r = kd_loss(&s, &s, &[1, 4], 0.1, 2.0, d).unwrap();
            assert!((r.loss - 0.1 * ce).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let s = RealMat::zeros(1, 3);
        assert!(kd_loss(&s, &s, &[0], -0.1, 2.0, Divergence::Js).is_err());
        assert!(kd_loss(&s, &s, &[0], 0.1, 0.0, Divergence::Js).is_err());
    }

    #[test]
    fn divergences_are_nonnegative_and_ordered_sensibly() {
        let mut rng = Rng::new(8);
        let s = random(&mut rng, 5, 7, 1.5);
        let t = random(&mut rng, 5, 7, 1.5);
        let labels = [0, 1, 2, 3, 4];
        let fwd = kd_loss(&s, &t, &labels, 0.0, 1.0, Divergence::ForwardKl).unwrap().loss;
        let rev = kd_loss(&s, &t, &labels, 0.0, 1.0, Divergence::ReverseKl).unwrap().loss;
        let js = kd_loss(&s, &t, &labels, 0.0, 1.0, Divergence::Js).unwrap().loss;
        assert!(fwd > 0.0 && rev > 0.0 && js > 0.0);
        // JS is bounded by ln 2 and by a quarter of the symmetrized KL.
        assert!(js <= 2f64.ln());
        assert!(js <= 0.25 * (fwd + rev) + 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(5);
        let s = random(&mut rng, 1, 10, 1.0);
        let t = random(&mut rng, 1, 10, 1.0);
        for d in DIVERGENCES {
            for tau in [1.0, 2.0, 4.0] {
                let r = grad_check(|m| kd_loss(m, &t, &[2], 0.1, tau, d), &s, 1e-5).unwrap();
                assert!(r.max_rel_error < 1e-6, "{d:?} tau={tau}: {r:?}");
            }
        }
    }

    #[test]
    fn kl_metric_examples() {
        let mut rng = Rng::new(6);
        let t = random(&mut rng, 4, 5, 2.0);
        assert!(student_teacher_kl(&t, &t).unwrap().abs() < 1e-12);

        let mut shifted = t.clone();
        for i in 0..4 {
            let c = 10.0 * rng.normal();
            shifted.row_mut(i).iter_mut().for_each(|v| *v += c);
        }
        assert!(student_teacher_kl(&shifted, &t).unwrap().abs() < 1e-10);
    }

    #[test]
    fn kl_metric_matches_term_by_term_sum() {
        let mut rng = Rng::new(7);
        let s = rng.normal_vec(5);
        let t = rng.normal_vec(5);
        // oracle: explicit exponentials, no shared helpers
        let zs: f64 = s.iter().map(|x| x.exp()).sum();
        let zt: f64 = t.iter().map(|x| x.exp()).sum();
        let mut kl = 0.0;
        for j in 0..5 {
            let p = t[j].exp() / zt;
            let q = s[j].exp() / zs;
            kl += p * (p / q).ln();
        }
        let got = student_teacher_kl(
            &RealMat::new(1, 5, s).unwrap(),
            &RealMat::new(1, 5, t).unwrap(),
        )
        .unwrap();
        assert!((got - kl).abs() < 1e-12, "{got} vs {kl}");
    }
}
