use pld_core::losses::{
    make_weights, pld_example_ascending, pld_loss, DistillLossConfig, LossKind, WeightScheme,
};
use pld_core::numerics::{log_sum_exp, softmax};
use pld_core::ranking::{pl_enumerate, pl_log_likelihood, teacher_optimal_permutation, weighted_suffix_nll, Ranking};
use pld_core::rng::Rng;
use pld_core::RealMat;

use crate::config::{echo, LosscheckConfig};
use crate::error::CliResult;
use crate::output::{Artifact, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub classes: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

struct Instance {
    s: Vec<f64>,
    t: Vec<f64>,
    y: usize,
}

fn draw(rng: &mut Rng, c: usize, scale: f64) -> Instance {
    let s = rng.normal_vec(c).into_iter().map(|v| scale * v).collect();
    let t = rng.normal_vec(c).into_iter().map(|v| scale * v).collect();
    Instance { s, t, y: rng.below(c) }
}

fn row(v: &[f64]) -> RealMat {
    RealMat::new(1, v.len(), v.to_vec()).expect("finite random row")
}

/// `(2^(C-k) - 1) / (2^C - C - 1)` for k = 1..C, straight from the definition.
fn exponential_schedule(c: usize) -> Vec<f64> {
    if c == 1 {
        return vec![1.0];
    }
    let den = 2f64.powi(c as i32) - c as f64 - 1.0;
    (1..=c).map(|k| (2f64.powi((c - k) as i32) - 1.0) / den).collect()
}

/// Product of sequential-choice probabilities, no log-space tricks.
fn naive_pl_probability(s: &[f64], pi: &Ranking) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = pi.order().iter().map(|&i| (s[i] - m).exp()).collect();
    (0..w.len()).map(|k| w[k] / w[k..].iter().sum::<f64>()).product()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reduction identities, translation invariance, enumeration oracle and the
/// ascending/descending equivalence, one row per (check, class count).
pub fn run_checks(cfg: &LosscheckConfig) -> CliResult<Vec<CheckRow>> {
    let root = Rng::new(cfg.seed);
    let mut rows = Vec::new();

    for &c in &cfg.classes {
        let mut rng = root.fork(c as u64);
        let mut onehot = 0.0f64;
        let mut uniform = 0.0f64;
        let mut exponential = 0.0f64;
        let mut shift = 0.0f64;
        let mut zero_sum = 0.0f64;
        let mut ascending = 0.0f64;
        for _ in 0..cfg.instances {
            let Instance { s, t, y } = draw(&mut rng, c, cfg.logit_scale);
            let pi = teacher_optimal_permutation(&t, y)?;
            let (sm, tm) = (row(&s), row(&t));

            let pld = pld_loss(&sm, &tm, &[y], 1.0, WeightScheme::OnehotFirst)?;
            let ce = log_sum_exp(&s)? - s[y];
            let mut ce_grad = softmax(&s, 1.0)?;
            ce_grad[y] -= 1.0;
            onehot = onehot.max((pld.loss - ce).abs()).max(max_abs_diff(pld.grad.row(0), &ce_grad));

            let pld = pld_loss(&sm, &tm, &[y], 1.0, WeightScheme::Uniform)?;
            uniform = uniform.max((pld.loss + pl_log_likelihood(&s, &pi)? / c as f64).abs());

            let pld = pld_loss(&sm, &tm, &[y], 1.0, WeightScheme::PlistmleExponential)?;
            let direct = weighted_suffix_nll(&s, &pi, &exponential_schedule(c))?;
            exponential = exponential.max((pld.loss - direct).abs());

            let offset = rng.uniform(-cfg.max_shift, cfg.max_shift);
            let shifted = row(&s.iter().map(|v| v + offset).collect::<Vec<_>>());
            for kind in [LossKind::Pld, LossKind::Listmle, LossKind::Plistmle] {
                let lc = DistillLossConfig::of_kind(kind);
                let base = lc.evaluate(&sm, &tm, &[y])?;
                let moved = lc.evaluate(&shifted, &tm, &[y])?;
                shift = shift.max((base.loss - moved.loss).abs());
                zero_sum = zero_sum
                    .max(base.grad.as_slice().iter().sum::<f64>().abs())
                    .max(moved.grad.as_slice().iter().sum::<f64>().abs());
            }

            let w = make_weights(&t, &pi, WeightScheme::TeacherSoftmax, 1.0)?;
            let (asc, _) = pld_example_ascending(&s, &pi, &w)?;
            ascending = ascending.max((asc - weighted_suffix_nll(&s, &pi, &w.alpha)?).abs());
        }
        let tol = cfg.identity_tolerance;
        let inv = cfg.invariance_tolerance;
        rows.push(CheckRow { check: "pld_onehot_equals_ce", classes: c, max_error: onehot, tolerance: tol });
        rows.push(CheckRow { check: "pld_uniform_equals_listmle_over_c", classes: c, max_error: uniform, tolerance: tol });
        rows.push(CheckRow { check: "pld_exponential_equals_plistmle", classes: c, max_error: exponential, tolerance: tol });
        rows.push(CheckRow { check: "translation_invariance", classes: c, max_error: shift, tolerance: inv });
        rows.push(CheckRow { check: "gradient_zero_sum", classes: c, max_error: zero_sum, tolerance: inv });
        rows.push(CheckRow { check: "ascending_equals_descending", classes: c, max_error: ascending, tolerance: tol });
    }

    let oracle = root.fork(u64::MAX);
    for &c in &cfg.oracle_classes {
        let mut rng = oracle.fork(c as u64);
        let mut total = 0.0f64;
        let mut each = 0.0f64;
        for _ in 0..cfg.oracle_draws {
            let s: Vec<f64> = rng.normal_vec(c).into_iter().map(|v| cfg.logit_scale * v).collect();
            let perms = pl_enumerate(&s)?;
            total = total.max((perms.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs());
            for (pi, p) in &perms {
                each = each
                    .max((p - naive_pl_probability(&s, pi)).abs())
                    .max((pl_log_likelihood(&s, pi)?.exp() - p).abs());
            }
        }
        rows.push(CheckRow { check: "pl_normalization", classes: c, max_error: total, tolerance: cfg.normalization_tolerance });
        rows.push(CheckRow { check: "pl_likelihood_matches_enumeration", classes: c, max_error: each, tolerance: cfg.identity_tolerance });
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[CheckRow]) -> String {
    let mut out = String::from("check,classes,max_error,tolerance,passed\n");
    for r in rows {
        out.push_str(&format!("{},{},{:e},{:e},{}\n", r.check, r.classes, r.max_error, r.tolerance, r.passed()));
    }
    out
}

pub fn run(cfg: &LosscheckConfig) -> CliResult<Outcome> {
    let rows = run_checks(cfg)?;
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "{:<4} {:<36} C={:<4} max_error={:.3e} (tol {:.0e})\n",
            if r.passed() { "PASS" } else { "FAIL" },
            r.check,
            r.classes,
            r.max_error,
            r.tolerance
        ));
    }
    let failed: Vec<String> = rows.iter().filter(|r| !r.passed()).map(|r| format!("{} (C={})", r.check, r.classes)).collect();
    Ok(Outcome {
        artifacts: vec![Artifact::new("config.json", echo(cfg)), Artifact::new("losscheck.csv", rows_csv(&rows))],
        summary,
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_hand_values() {
        assert_eq!(exponential_schedule(1), vec![1.0]);
        let w = exponential_schedule(3);
        assert_eq!(w, vec![3.0 / 4.0, 1.0 / 4.0, 0.0]);
    }

    #[test]
    fn naive_probability_two_items() {
        let s = [0.0, 2f64.ln()];
        let p = naive_pl_probability(&s, &Ranking::new(vec![1, 0]).unwrap());
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_suite_passes() {
        let cfg = LosscheckConfig { instances: 20, ..Default::default() };
        let rows = run_checks(&cfg).unwrap();
        assert_eq!(rows.len(), 6 * 3 + 2 * 5);
        for r in &rows {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn six_class_oracle_normalizes() {
        let cfg = LosscheckConfig { classes: vec![2], instances: 1, oracle_classes: vec![6], ..Default::default() };
        let rows = run_checks(&cfg).unwrap();
        let norm = rows.iter().find(|r| r.check == "pl_normalization").unwrap();
        assert!(norm.max_error < 1e-9);
    }
}
