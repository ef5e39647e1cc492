//! Desk-scale distillation: synthetic blobs, a dense ReLU classifier trained
//! with AdamW, teacher training and student distillation under any loss.

mod dataset;
mod mlp;
mod optim;
mod train;

pub use dataset::{make_blobs, BlobSpec, Blobs, SyntheticDataset};
pub use mlp::{Gradients, Layer, MlpModel, Trace, MODEL_FORMAT_VERSION};
pub use optim::{step_optimizer, AdamWConfig, AdamWState};
pub use train::{
    distill_student, init_model, metrics_csv, top1_accuracy, train_teacher, DistillRun, EpochRecord,
    TrainConfig, TrainReport,
};
