use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::{ce_loss, student_teacher_kl, DistillLossConfig, LossResult};
use crate::numerics::{argmax, RealMat};
use crate::rng::Rng;

use super::dataset::{Blobs, SyntheticDataset};
use super::mlp::MlpModel;
use super::optim::{step_optimizer, AdamWConfig, AdamWState};

/// Stream tags forked off the run seed.
const INIT_STREAM: u64 = 11;
const SHUFFLE_STREAM: u64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub test_top1: f64,
    /// Mean `KL(teacher || student)` on the test split; absent when there is no teacher.
    pub teacher_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: MlpModel,
    pub records: Vec<EpochRecord>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillRun {
    pub loss: DistillLossConfig,
    pub train: TrainConfig,
    pub student_sizes: Vec<usize>,
    pub records: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
    pub model: MlpModel,
}

pub fn top1_accuracy(logits: &RealMat, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    hits as f64 / labels.len() as f64
}

fn check_arch(arch: &[usize], data: &Blobs) -> Result<()> {
    if arch.len() < 2 {
        return invalid("architecture needs input and output sizes");
    }
    if arch[0] != data.train.dim() {
        return invalid(format!("architecture input {} != feature dim {}", arch[0], data.train.dim()));
    }
    if *arch.last().unwrap() != data.train.classes {
        return invalid(format!(
            "architecture output {} != class count {}",
            arch.last().unwrap(),
            data.train.classes
        ));
    }
    Ok(())
}

/// Initial model for `arch` under `seed`; shared by teachers and students so
/// equal seeds give equal starting points.
pub fn init_model(arch: &[usize], seed: u64) -> Result<MlpModel> {
    MlpModel::new(arch, &mut Rng::new(seed).fork(INIT_STREAM))
}

/// Cross-entropy training from scratch.
pub fn train_teacher(data: &Blobs, arch: &[usize], cfg: &TrainConfig) -> Result<TrainReport> {
    check_arch(arch, data)?;
    cfg.validate()?;
    let mut model = init_model(arch, cfg.seed)?;
    let (records, step_losses) = fit(&mut model, data, cfg, None, |_, logits, labels| {
        ce_loss(logits, labels)
    })?;
    Ok(TrainReport { model, records, step_losses })
}

/// Trains a fresh student against a frozen teacher under `loss`.
///
/// The teacher is deterministic and never updated, so its logits for the
/// training split are computed once up front and gathered per batch.
pub fn distill_student(
    data: &Blobs,
    teacher: &MlpModel,
    arch: &[usize],
    loss: &DistillLossConfig,
    cfg: &TrainConfig,
) -> Result<DistillRun> {
    check_arch(arch, data)?;
    if teacher.output_dim() != data.train.classes || teacher.output_dim() != arch[arch.len() - 1] {
        return invalid(format!(
            "teacher emits {} logits, student {} and data has {} classes",
            teacher.output_dim(),
            arch[arch.len() - 1],
            data.train.classes
        ));
    }
    if teacher.input_dim() != data.train.dim() {
        return invalid("teacher input dimension does not match the features");
    }
    loss.validate()?;
    cfg.validate()?;

    let teacher_train = teacher.forward(&data.train.features)?;
    let teacher_test = teacher.forward(&data.test.features)?;
    let mut model = init_model(arch, cfg.seed)?;
    let (records, step_losses) = fit(&mut model, data, cfg, Some(&teacher_test), |idx, logits, labels| {
        let t = teacher_train.gather_rows(idx);
        loss.evaluate(logits, &t, labels)
    })?;
    Ok(DistillRun {
        loss: loss.clone(),
        train: cfg.clone(),
        student_sizes: arch.to_vec(),
        records,
        step_losses,
        model,
    })
}

fn fit<F>(
    model: &mut MlpModel,
    data: &Blobs,
    cfg: &TrainConfig,
    teacher_test: Option<&RealMat>,
    mut batch_loss: F,
) -> Result<(Vec<EpochRecord>, Vec<f64>)>
where
    F: FnMut(&[usize], &RealMat, &[usize]) -> Result<LossResult>,
{
    let train: &SyntheticDataset = &data.train;
    let mut shuffle = Rng::new(cfg.seed).fork(SHUFFLE_STREAM);
    let mut state = AdamWState::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let classes = model.output_dim();

    for epoch in 1..=cfg.epochs {
        let failure = |reason: String| Error::TrainingFailure { epoch, reason };
        shuffle.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = train.subset(idx);
            let trace = model.forward_trace(&x)?;
            let logits = trace
                .logits(classes)
                .map_err(|_| failure("non-finite logits".into()))?;
            let LossResult { loss, grad } = batch_loss(idx, &logits, &y)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(failure(format!("non-finite loss {loss}")));
            }
            let grads = model.backward_trace(&trace, &grad)?;
            {
                let mut params: Vec<&mut [f64]> = model
                    .layers_mut()
                    .iter_mut()
                    .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
                    .collect();
                let g: Vec<&[f64]> = grads
                    .layers
                    .iter()
                    .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
                    .collect();
                step_optimizer(&mut params, &g, &mut state, &cfg.optimizer)?;
            }
            if !model.is_finite() {
                return Err(failure("non-finite parameters after update".into()));
            }
            epoch_loss += loss;
            batches += 1;
            step_losses.push(loss);
        }

        let test_logits = model
            .forward(&data.test.features)
            .map_err(|_| failure("non-finite test logits".into()))?;
        let teacher_kl = match teacher_test {
            Some(t) if !data.test.is_empty() => Some(student_teacher_kl(&test_logits, t)?),
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            test_top1: top1_accuracy(&test_logits, &data.test.labels),
            teacher_kl,
        });
    }
    Ok((records, step_losses))
}

/// `epoch,train_loss,test_top1,teacher_kl`, one line per record; the KL cell
/// is empty for runs without a teacher.
pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,test_top1,teacher_kl\n");
    for r in records {
        let kl = r.teacher_kl.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.test_top1, kl));
    }
    out
}
