use crate::error::{invalid, Result};
use crate::numerics::RealMat;

use super::LossResult;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Largest `|a - n|` over coordinates, whatever its scale.
    pub max_abs_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central-difference check of `loss_fn`'s gradient at `at`.
///
/// Per coordinate the error is `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`;
/// the maximum over coordinates is reported.
pub fn grad_check<F>(loss_fn: F, at: &RealMat, step: f64) -> Result<GradCheck>
where
    F: Fn(&RealMat) -> Result<LossResult>,
{
    if !(step.is_finite() && step > 0.0) {
        return invalid(format!("finite-difference step must be positive, got {step}"));
    }
    let analytic = loss_fn(at)?.grad;
    let mut probe = at.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for idx in 0..at.as_slice().len() {
        let x = at.as_slice()[idx];
        probe.as_mut_slice()[idx] = x + step;
        let up = loss_fn(&probe)?.loss;
        probe.as_mut_slice()[idx] = x - step;
        let down = loss_fn(&probe)?.loss;
        probe.as_mut_slice()[idx] = x;

        let numeric = (up - down) / (2.0 * step);
        let a = analytic.as_slice()[idx];
        let abs = (a - numeric).abs();
        let err = abs / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        if err > report.max_rel_error || idx == 0 {
            report = GradCheck {
                max_rel_error: err,
                max_abs_error: report.max_abs_error,
                worst_index: idx,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(m: &RealMat) -> Result<LossResult> {
        let loss = m.as_slice().iter().map(|v| 0.5 * v * v).sum();
        Ok(LossResult { loss, grad: m.clone() })
    }

    #[test]
    fn exact_gradient_passes() {
        let m = RealMat::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let r = grad_check(quadratic, &m, DEFAULT_STEP).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let m = RealMat::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let wrong = |m: &RealMat| -> Result<LossResult> {
            let mut r = quadratic(m)?;
            r.grad.set(0, 2, 0.0);
            Ok(r)
        };
        let r = grad_check(wrong, &m, DEFAULT_STEP).unwrap();
        assert_eq!(r.worst_index, 2);
        assert!((r.max_rel_error - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_step() {
        let m = RealMat::zeros(1, 1);
        assert!(grad_check(quadratic, &m, 0.0).is_err());
        assert!(grad_check(quadratic, &m, -1e-5).is_err());
    }
}
