use std::fs;
use std::path::{Path, PathBuf};

use pld_core::distill::{distill_student, make_blobs, metrics_csv, train_teacher, EpochRecord, MlpModel};

use crate::config::{echo, DistillConfig, TeacherConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifact, Outcome};

fn last_line(records: &[EpochRecord]) -> String {
    match records.last() {
        None => "no epochs run\n".into(),
        Some(r) => {
            let kl = r.teacher_kl.map(|v| format!(", teacher_kl {v:.4}")).unwrap_or_default();
            format!("epoch {}: train_loss {:.4}, test_top1 {:.4}{kl}\n", r.epoch, r.train_loss, r.test_top1)
        }
    }
}

pub fn run_teacher(cfg: &TeacherConfig) -> CliResult<Outcome> {
    let data = make_blobs(&cfg.data)?;
    let report = train_teacher(&data, &cfg.arch, &cfg.train)?;
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("config.json", echo(cfg)),
            Artifact::new("metrics.csv", metrics_csv(&report.records)),
            Artifact::new("model.json", report.model.to_json()),
        ],
        summary: last_line(&report.records),
        failure: None,
    })
}

/// Makes a relative teacher path absolute so the echoed config reruns from
/// any working directory.
pub fn resolve_teacher(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path).map_err(|e| CliError::Io(format!("teacher model {}: {e}", path.display())))
}

pub fn load_teacher(path: &Path) -> CliResult<MlpModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading teacher {}: {e}", path.display())))?;
    MlpModel::from_json(&text).map_err(|e| CliError::Io(format!("teacher {}: {e}", path.display())))
}

/// Expects `cfg.teacher` to be resolved already.
pub fn run_distill(cfg: &DistillConfig) -> CliResult<Outcome> {
    let teacher = load_teacher(&cfg.teacher)?;
    let data = make_blobs(&cfg.data)?;
    let run = distill_student(&data, &teacher, &cfg.arch, &cfg.loss, &cfg.train)?;
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("config.json", echo(cfg)),
            Artifact::new("metrics.csv", metrics_csv(&run.records)),
            Artifact::new("model.json", run.model.to_json()),
        ],
        summary: last_line(&run.records),
        failure: None,
    })
}
