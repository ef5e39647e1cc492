use crate::error::{invalid, Result};
use crate::numerics::{log_sum_exp_unchecked, softmax_into, RealMat};

use super::{check_batch, LossResult};

/// Added to every Pearson denominator.
pub const PEARSON_EPS: f64 = 1e-8;

/// Pearson correlation with the guarded denominator `|a| |b| + PEARSON_EPS`,
/// where `a`, `b` are the centered inputs.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    pearson_parts(x, y).rho
}

struct PearsonParts {
    rho: f64,
    /// centered x and y
    a: Vec<f64>,
    b: Vec<f64>,
    norm_a: f64,
    norm_b: f64,
    denom: f64,
}

fn pearson_parts(x: &[f64], y: &[f64]) -> PearsonParts {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let a: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let b: Vec<f64> = y.iter().map(|v| v - my).collect();
    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cov: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let denom = norm_a * norm_b + PEARSON_EPS;
    PearsonParts { rho: cov / denom, a, b, norm_a, norm_b, denom }
}

/// Accumulates `scale * d rho / d x` into `out`.
fn pearson_grad_x(p: &PearsonParts, scale: f64, mut out: impl FnMut(usize, f64)) {
    // d cov / dx = b (b is centered); d|a| / dx = a / |a|
    let k = if p.norm_a > 0.0 {
        p.rho * p.norm_b / (p.denom * p.norm_a)
    } else {
        0.0
    };
    for (j, (aj, bj)) in p.a.iter().zip(&p.b).enumerate() {
        out(j, scale * (bj / p.denom - k * aj));
    }
}

/// `ce_mix * CE + beta * mean_rows(1 - rho) + gamma * mean_cols(1 - rho)` where
/// rho correlates student and teacher probabilities at `temperature`, row by
/// row (inter-class) and column by column across the batch (intra-class).
pub fn dist_loss(
    student: &RealMat,
    teacher: &RealMat,
    labels: &[usize],
    ce_mix: f64,
    beta: f64,
    gamma: f64,
    temperature: f64,
) -> Result<LossResult> {
    if !(0.0..=1.0).contains(&ce_mix) {
        return invalid(format!("ce_mix must lie in [0, 1], got {ce_mix}"));
    }
    if !(beta >= 0.0 && gamma >= 0.0 && beta.is_finite() && gamma.is_finite()) {
        return invalid("beta and gamma must be finite and nonnegative");
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return invalid(format!("temperature must be positive, got {temperature}"));
    }
    check_batch(student, Some(teacher), labels)?;
    let (n, c) = (student.rows(), student.cols());
    if c < 2 {
        return invalid("correlation loss needs at least two classes");
    }
    if gamma > 0.0 && n < 2 {
        return invalid("intra-class correlation needs a batch of at least two rows");
    }

    let mut qs = RealMat::zeros(n, c);
    let mut qt = RealMat::zeros(n, c);
    for i in 0..n {
        softmax_into(student.row(i), temperature, qs.row_mut(i));
        softmax_into(teacher.row(i), temperature, qt.row_mut(i));
    }

    // Gradient with respect to the student probabilities.
    let mut dq = RealMat::zeros(n, c);
    let mut loss = 0.0;

    if beta > 0.0 {
        let w = beta / n as f64;
        for i in 0..n {
            let p = pearson_parts(qs.row(i), qt.row(i));
            loss += w * (1.0 - p.rho);
            let row = dq.row_mut(i);
            pearson_grad_x(&p, -w, |j, g| row[j] += g);
        }
    }
    if gamma > 0.0 {
        let w = gamma / c as f64;
        let mut xs = vec![0.0; n];
        let mut ys = vec![0.0; n];
        for j in 0..c {
            for i in 0..n {
                xs[i] = qs.get(i, j);
                ys[i] = qt.get(i, j);
            }
            let p = pearson_parts(&xs, &ys);
            loss += w * (1.0 - p.rho);
            pearson_grad_x(&p, -w, |i, g| {
                let v = dq.get(i, j) + g;
                dq.set(i, j, v);
            });
        }
    }

    let inv_n = 1.0 / n as f64;
    let inv_t = 1.0 / temperature;
    let mut grad = RealMat::zeros(n, c);
    let mut ce_total = 0.0;
    for i in 0..n {
        let s = student.row(i);
        let y = labels[i];
        let q = qs.row(i);
        let d = dq.row(i);
        let mean: f64 = q.iter().zip(d).map(|(a, b)| a * b).sum();
        let g = grad.row_mut(i);
        // softmax Jacobian at temperature: (1/tau) q (d - <q, d>)
        for j in 0..c {
            g[j] = inv_t * q[j] * (d[j] - mean);
        }
        if ce_mix > 0.0 {
            ce_total += log_sum_exp_unchecked(s) - s[y];
            let mut p = vec![0.0; c];
            softmax_into(s, 1.0, &mut p);
            p[y] -= 1.0;
            for j in 0..c {
                g[j] += ce_mix * p[j] * inv_n;
            }
        }
    }
    loss += ce_mix * ce_total * inv_n;
    Ok(LossResult { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::grad_check;
    use crate::rng::Rng;

    fn random(rng: &mut Rng, n: usize, c: usize) -> RealMat {
        RealMat::new(n, c, rng.normal_vec(n * c)).unwrap()
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-8);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-8);
        // constant input: guarded, no NaN
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps() {
        let mut rng = Rng::new(1);
        let x = rng.normal_vec(10);
        let y = rng.normal_vec(10);
        let xa: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
        assert!((pearson(&x, &y) - pearson(&xa, &y)).abs() < 1e-8);
    }

    #[test]
    fn matching_probabilities_give_near_zero() {
        let mut rng = Rng::new(2);
        let t = random(&mut rng, 6, 10);
        let labels = [0, 1, 2, 3, 4, 5];
        let r = dist_loss(&t, &t, &labels, 0.0, 0.45, 0.45, 1.0).unwrap();
        // Only the epsilon guard separates rho from 1.
        assert!(r.loss.abs() < 1e-5, "{}", r.loss);
        assert!(r.loss >= 0.0);
        let inter_only = dist_loss(&t, &t, &labels, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(inter_only.loss < 1e-5);
    }

    #[test]
    fn guard_conditions() {
        let one = RealMat::zeros(1, 4);
        assert!(dist_loss(&one, &one, &[0], 0.1, 0.45, 0.45, 1.0).is_err());
        assert!(dist_loss(&one, &one, &[0], 0.1, 0.45, 0.0, 1.0).is_ok());
        let narrow = RealMat::zeros(2, 1);
        assert!(dist_loss(&narrow, &narrow, &[0, 0], 0.1, 0.45, 0.45, 1.0).is_err());
        assert!(dist_loss(&one, &one, &[0], 0.1, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let s = random(&mut rng, 8, 10);
        let t = random(&mut rng, 8, 10);
        let labels: Vec<usize> = (0..8).collect();
        for tau in [1.0, 4.0] {
            let r = grad_check(|m| dist_loss(m, &t, &labels, 0.1, 0.45, 0.45, tau), &s, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-5, "tau={tau}: {r:?}");
        }
        let r = grad_check(|m| dist_loss(m, &t, &labels, 0.0, 1.0, 0.0, 1.0), &s, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }
}
