use crate::error::{invalid, Result};
use crate::numerics::RealMat;

/// Guard on the row standard deviation: rows are divided by
/// `sqrt(var + STD_EPS^2)`, so constant rows map to zero.
pub const STD_EPS: f64 = 1e-8;

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, (var + STD_EPS * STD_EPS).sqrt())
}

/// Per-row z-score with the population standard deviation.
pub fn standardize_logits(batch: &RealMat) -> Result<RealMat> {
    if batch.cols() < 2 {
        return invalid("standardization needs at least two classes");
    }
    let mut out = batch.clone();
    for i in 0..batch.rows() {
        let (mean, sd) = row_stats(batch.row(i));
        out.row_mut(i).iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

/// Pulls a gradient taken with respect to standardized logits back to the
/// raw logits: `(g - mean(g) - z * mean(g * z)) / sd`, row by row.
pub fn standardize_backward(raw: &RealMat, grad: &RealMat) -> Result<RealMat> {
    if raw.rows() != grad.rows() || raw.cols() != grad.cols() {
        return invalid("gradient shape does not match logits");
    }
    if raw.cols() < 2 {
        return invalid("standardization needs at least two classes");
    }
    let n = raw.cols() as f64;
    let mut out = RealMat::zeros(raw.rows(), raw.cols());
    for i in 0..raw.rows() {
        let x = raw.row(i);
        let g = grad.row(i);
        let (mean, sd) = row_stats(x);
        let g_mean = g.iter().sum::<f64>() / n;
        let gz_mean = x.iter().zip(g).map(|(v, gv)| gv * (v - mean) / sd).sum::<f64>() / n;
        for ((o, v), gv) in out.row_mut(i).iter_mut().zip(x).zip(g) {
            let z = (v - mean) / sd;
            *o = (gv - g_mean - z * gz_mean) / sd;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{grad_check, pld_loss, LossResult, WeightScheme};
    use crate::rng::Rng;

    #[test]
    fn simple_row() {
        let m = RealMat::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let z = standardize_logits(&m).unwrap();
        let s = 1.5f64.sqrt();
        for (a, b) in z.row(0).iter().zip([-s, 0.0, s]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_row_maps_to_zero() {
        let m = RealMat::new(1, 3, vec![5.0, 5.0, 5.0]).unwrap();
        let z = standardize_logits(&m).unwrap();
        assert_eq!(z.row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_single_class() {
        assert!(standardize_logits(&RealMat::zeros(2, 1)).is_err());
    }

    #[test]
    fn random_rows_have_zero_mean_unit_std() {
        let mut rng = Rng::new(1);
        let m = RealMat::new(20, 17, rng.normal_vec(340).into_iter().map(|x| 3.0 * x + 1.0).collect()).unwrap();
        let z = standardize_logits(&m).unwrap();
        for row in z.iter_rows() {
            // recompute directly
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let s = RealMat::new(3, 8, rng.normal_vec(24)).unwrap();
        let t = RealMat::new(3, 8, rng.normal_vec(24)).unwrap();
        let labels = [0, 5, 7];
        let f = |m: &RealMat| -> crate::error::Result<LossResult> {
            let zs = standardize_logits(m)?;
            let zt = standardize_logits(&t)?;
            let inner = pld_loss(&zs, &zt, &labels, 1.0, WeightScheme::TeacherSoftmax)?;
            Ok(LossResult { loss: inner.loss, grad: standardize_backward(m, &inner.grad)? })
        };
        let r = grad_check(f, &s, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }
}
