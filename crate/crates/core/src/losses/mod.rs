//! Loss kernels over batches of logits, each returning the batch-mean loss
//! together with its gradient with respect to the student logits.
//!
//! | kind | objective |
//! |------|-----------|
//! | `ce` | cross-entropy on the hard label |
//! | `ls` | cross-entropy against a label-smoothed target |
//! | `kd` | `a*CE + (1-a)*tau^2*D(q_T, q_S)`, D one of forward KL, reverse KL, JS |
//! | `dist` | `a*CE + b*(1 - row Pearson) + g*(1 - column Pearson)` on softened probabilities |
//! | `listmle` | Plackett-Luce NLL of the teacher-optimal ranking, uniform weights |
//! | `plistmle` | same, with normalized `2^(C-k) - 1` position weights |
//! | `pld` | same, with the teacher's softmax mass as position weights |

mod ce;
mod dist;
mod gradcheck;
mod kd;
mod pld;
mod standardize;

pub use ce::{ce_loss, ls_loss};
pub use dist::{dist_loss, pearson, PEARSON_EPS};
pub use gradcheck::{grad_check, GradCheck, DEFAULT_STEP, RELATIVE_FLOOR};
pub use kd::{kd_loss, student_teacher_kl};
pub use pld::{
    make_weights, pld_example_ascending, pld_gradient_closed_form, pld_loss, PositionWeights,
    WeightScheme,
};
pub use standardize::{standardize_backward, standardize_logits, STD_EPS};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::RealMat;

/// Batch-mean loss and its gradient with respect to the student logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub grad: RealMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Ls,
    Kd,
    Dist,
    Listmle,
    Plistmle,
    Pld,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Ce,
        LossKind::Ls,
        LossKind::Kd,
        LossKind::Dist,
        LossKind::Listmle,
        LossKind::Plistmle,
        LossKind::Pld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Ls => "ls",
            LossKind::Kd => "kd",
            LossKind::Dist => "dist",
            LossKind::Listmle => "listmle",
            LossKind::Plistmle => "plistmle",
            LossKind::Pld => "pld",
        }
    }

    /// Kinds that evaluate a Plackett-Luce likelihood of the teacher-optimal ranking.
    pub fn is_ranking(self) -> bool {
        matches!(self, LossKind::Listmle | LossKind::Plistmle | LossKind::Pld)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown loss kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    ForwardKl,
    ReverseKl,
    Js,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardize {
    None,
    Both,
    TeacherOnly,
}

/// Every hyperparameter any loss kind reads. Only the fields relevant to
/// `kind` are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillLossConfig {
    pub kind: LossKind,
    /// Weight on the hard-label cross-entropy for `kd` and `dist`.
    pub ce_mix: f64,
    pub kd_temperature: f64,
    pub divergence: Divergence,
    /// Softens only the teacher weights of `pld`.
    pub teacher_temperature: f64,
    /// Position-weight scheme for `kind = pld`; `listmle` and `plistmle`
    /// always use their own.
    pub weight_scheme: WeightScheme,
    pub dist_beta: f64,
    pub dist_gamma: f64,
    pub dist_temperature: f64,
    pub ls_epsilon: f64,
    pub standardize: Standardize,
}

impl Default for DistillLossConfig {
    fn default() -> Self {
        DistillLossConfig {
            kind: LossKind::Pld,
            ce_mix: 0.1,
            kd_temperature: 2.0,
            divergence: Divergence::ForwardKl,
            teacher_temperature: 1.0,
            weight_scheme: WeightScheme::TeacherSoftmax,
            dist_beta: 0.45,
            dist_gamma: 0.45,
            dist_temperature: 1.0,
            ls_epsilon: 0.1,
            standardize: Standardize::None,
        }
    }
}

impl DistillLossConfig {
    pub fn of_kind(kind: LossKind) -> Self {
        DistillLossConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
            Ok(())
        };
        positive("kd_temperature", self.kd_temperature)?;
        positive("teacher_temperature", self.teacher_temperature)?;
        positive("dist_temperature", self.dist_temperature)?;
        if !(0.0..=1.0).contains(&self.ce_mix) {
            return invalid(format!("ce_mix must lie in [0, 1], got {}", self.ce_mix));
        }
        if !(self.dist_beta >= 0.0 && self.dist_gamma >= 0.0) {
            return invalid("dist_beta and dist_gamma must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.ls_epsilon) {
            return invalid(format!("ls_epsilon must lie in [0, 1), got {}", self.ls_epsilon));
        }
        Ok(())
    }

    /// The position-weight scheme a ranking kind uses, `None` for the others.
    pub fn ranking_scheme(&self) -> Option<WeightScheme> {
        match self.kind {
            LossKind::Pld => Some(self.weight_scheme),
            LossKind::Listmle => Some(WeightScheme::Uniform),
            LossKind::Plistmle => Some(WeightScheme::PlistmleExponential),
            _ => None,
        }
    }

    /// Evaluate the configured loss, applying logit standardization first
    /// when requested and chaining its Jacobian into the returned gradient.
    pub fn evaluate(&self, student: &RealMat, teacher: &RealMat, labels: &[usize]) -> Result<LossResult> {
        self.validate()?;
        match self.standardize {
            Standardize::None => self.evaluate_raw(student, teacher, labels),
            Standardize::TeacherOnly => {
                let t = standardize_logits(teacher)?;
                self.evaluate_raw(student, &t, labels)
            }
            Standardize::Both => {
                let s = standardize_logits(student)?;
                let t = standardize_logits(teacher)?;
                let inner = self.evaluate_raw(&s, &t, labels)?;
                let grad = standardize_backward(student, &inner.grad)?;
                Ok(LossResult { loss: inner.loss, grad })
            }
        }
    }

    fn evaluate_raw(&self, student: &RealMat, teacher: &RealMat, labels: &[usize]) -> Result<LossResult> {
        match self.kind {
            LossKind::Ce => ce_loss(student, labels),
            LossKind::Ls => ls_loss(student, labels, self.ls_epsilon),
            LossKind::Kd => kd_loss(
                student,
                teacher,
                labels,
                self.ce_mix,
                self.kd_temperature,
                self.divergence,
            ),
            LossKind::Dist => dist_loss(
                student,
                teacher,
                labels,
                self.ce_mix,
                self.dist_beta,
                self.dist_gamma,
                self.dist_temperature,
            ),
            LossKind::Listmle | LossKind::Plistmle | LossKind::Pld => pld_loss(
                student,
                teacher,
                labels,
                self.teacher_temperature,
                self.ranking_scheme().expect("ranking kind"),
            ),
        }
    }
}

/// Shape and label checks shared by every batch kernel.
pub(crate) fn check_batch(student: &RealMat, teacher: Option<&RealMat>, labels: &[usize]) -> Result<()> {
    if student.rows() == 0 || student.cols() == 0 {
        return invalid("empty logit batch");
    }
    if labels.len() != student.rows() {
        return invalid(format!(
            "{} labels for a batch of {} rows",
            labels.len(),
            student.rows()
        ));
    }
    if let Some(t) = teacher {
        if t.rows() != student.rows() || t.cols() != student.cols() {
            return invalid(format!(
                "teacher batch is {}x{}, student batch is {}x{}",
                t.rows(),
                t.cols(),
                student.rows(),
                student.cols()
            ));
        }
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= student.cols()) {
        return invalid(format!("label {y} out of range for {} classes", student.cols()));
    }
    Ok(())
}
