use pld_core::losses::{
    grad_check, make_weights, pld_gradient_closed_form, Divergence, DistillLossConfig, LossKind, Standardize,
    WeightScheme,
};
use pld_core::ranking::teacher_optimal_permutation;
use pld_core::rng::Rng;
use pld_core::RealMat;

use crate::config::{echo, GradcheckConfig};
use crate::error::CliResult;
use crate::output::{Artifact, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct GradRow {
    pub kind: LossKind,
    pub variant: String,
    pub classes: usize,
    pub batch: usize,
    pub trials: usize,
    pub max_error: f64,
    /// Largest absolute gradient discrepancy; for FD rows this shows the
    /// rounding floor that tiny gradient coordinates are compared against.
    pub max_abs_error: f64,
    pub threshold: f64,
}

impl GradRow {
    pub fn passed(&self) -> bool {
        self.max_error < self.threshold
    }
}

struct Case {
    variant: String,
    loss: DistillLossConfig,
    threshold: f64,
}

impl Case {
    /// Two standardized logits are always `(-1, 1)` up to order, so the
    /// standardized loss is flat in `s` and there is nothing to check.
    fn applies_to(&self, classes: usize) -> bool {
        self.loss.standardize != Standardize::Both || classes >= 3
    }
}

fn cases(kind: LossKind, cfg: &GradcheckConfig) -> Vec<Case> {
    let base = DistillLossConfig::of_kind(kind);
    let plain = |variant: &str, loss: DistillLossConfig| Case { variant: variant.into(), loss, threshold: cfg.threshold };
    match kind {
        LossKind::Kd => [
            ("forward-kl", Divergence::ForwardKl),
            ("reverse-kl", Divergence::ReverseKl),
            ("js", Divergence::Js),
        ]
        .into_iter()
        .map(|(name, divergence)| plain(name, DistillLossConfig { divergence, ..base.clone() }))
        .collect(),
        LossKind::Pld => {
            let mut out = vec![
                plain("default", base.clone()),
                plain("standardize-both", DistillLossConfig { standardize: Standardize::Both, ..base.clone() }),
            ];
            for &t in &cfg.pld_temperatures {
                out.push(Case {
                    variant: format!("teacher-temperature-{t}"),
                    loss: DistillLossConfig { teacher_temperature: t, ..base.clone() },
                    threshold: cfg.pld_threshold,
                });
            }
            out
        }
        _ => vec![plain("default", base)],
    }
}

fn random_batch(rng: &mut Rng, n: usize, c: usize, scale: f64) -> (RealMat, RealMat, Vec<usize>) {
    let mat = |rng: &mut Rng| {
        RealMat::new(n, c, rng.normal_vec(n * c).into_iter().map(|v| scale * v).collect()).expect("finite")
    };
    let s = mat(rng);
    let t = mat(rng);
    let labels = (0..n).map(|_| rng.below(c)).collect();
    (s, t, labels)
}

/// Largest absolute gap between the closed-form per-example gradient
/// (scaled by the batch mean) and the implemented batch gradient.
fn closed_form_gap(s: &RealMat, t: &RealMat, labels: &[usize], loss: &DistillLossConfig) -> CliResult<f64> {
    let grad = loss.evaluate(s, t, labels)?.grad;
    let n = s.rows() as f64;
    let mut worst = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let pi = teacher_optimal_permutation(t.row(i), y)?;
        let w = make_weights(t.row(i), &pi, WeightScheme::TeacherSoftmax, loss.teacher_temperature)?;
        let closed = pld_gradient_closed_form(s.row(i), &pi, &w)?;
        for (a, b) in closed.iter().zip(grad.row(i)) {
            worst = worst.max((a / n - b).abs());
        }
    }
    Ok(worst)
}

pub fn run_checks(cfg: &GradcheckConfig) -> CliResult<Vec<GradRow>> {
    let root = Rng::new(cfg.seed);
    let mut rows = Vec::new();
    for (ki, &kind) in cfg.kinds.iter().enumerate() {
        for case in cases(kind, cfg) {
            for &c in cfg.classes.iter().filter(|&&c| case.applies_to(c)) {
                for &n in &cfg.batch_sizes {
                    let mut loss = case.loss.clone();
                    if kind == LossKind::Dist && n == 1 {
                        // The intra-class term needs at least two rows.
                        loss.dist_gamma = 0.0;
                    }
                    let mut rng = root.fork(((ki as u64) << 32) ^ ((c as u64) << 8) ^ n as u64);
                    let mut worst = 0.0f64;
                    let mut worst_abs = 0.0f64;
                    let mut closed = 0.0f64;
                    for _ in 0..cfg.trials {
                        let (s, t, labels) = random_batch(&mut rng, n, c, cfg.logit_scale);
                        let f = |m: &RealMat| loss.evaluate(m, &t, &labels);
                        let r = grad_check(f, &s, cfg.step)?;
                        worst = worst.max(r.max_rel_error);
                        worst_abs = worst_abs.max(r.max_abs_error);
                        if kind == LossKind::Pld && case.variant == "default" {
                            closed = closed.max(closed_form_gap(&s, &t, &labels, &loss)?);
                        }
                    }
                    rows.push(GradRow {
                        kind,
                        variant: case.variant.clone(),
                        classes: c,
                        batch: n,
                        trials: cfg.trials,
                        max_error: worst,
                        max_abs_error: worst_abs,
                        threshold: case.threshold,
                    });
                    if kind == LossKind::Pld && case.variant == "default" {
                        rows.push(GradRow {
                            kind,
                            variant: "closed-form".into(),
                            classes: c,
                            batch: n,
                            trials: cfg.trials,
                            max_error: closed,
                            max_abs_error: closed,
                            threshold: cfg.closed_form_tolerance,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[GradRow]) -> String {
    let mut out = String::from("kind,variant,classes,batch,trials,max_error,max_abs_error,threshold,passed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:e},{:e},{:e},{}\n",
            r.kind,
            r.variant,
            r.classes,
            r.batch,
            r.trials,
            r.max_error,
            r.max_abs_error,
            r.threshold,
            r.passed()
        ));
    }
    out
}

pub fn run(cfg: &GradcheckConfig) -> CliResult<Outcome> {
    let rows = run_checks(cfg)?;
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "{:<4} {:<9} {:<26} C={:<4} N={:<3} max={:.3e} (bound {:.0e}) abs={:.1e}\n",
            if r.passed() { "PASS" } else { "FAIL" },
            r.kind.name(),
            r.variant,
            r.classes,
            r.batch,
            r.max_error,
            r.threshold,
            r.max_abs_error
        ));
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}/{} C={} N={}", r.kind, r.variant, r.classes, r.batch))
        .collect();
    Ok(Outcome {
        artifacts: vec![Artifact::new("config.json", echo(cfg)), Artifact::new("gradcheck.csv", rows_csv(&rows))],
        summary,
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
    })
}
