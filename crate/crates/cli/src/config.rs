use std::fs;
use std::path::{Path, PathBuf};

use pld_core::distill::{BlobSpec, TrainConfig};
use pld_core::landscape::SliceSpec;
use pld_core::losses::{DistillLossConfig, LossKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

fn version() -> u32 {
    CONFIG_FORMAT_VERSION
}

/// Implemented by every command's config document.
pub trait RunConfig: Serialize + DeserializeOwned + Default {
    fn format_version(&self) -> u32;
    /// Applies `--seed`.
    fn set_seed(&mut self, seed: u64);
    fn validate(&self) -> CliResult<()> {
        Ok(())
    }
}

/// Reads `path` (or takes defaults), applies the seed override and checks
/// the document. Unknown fields and version mismatches are usage errors.
pub fn load<C: RunConfig>(path: Option<&Path>, seed: Option<u64>) -> CliResult<C> {
    let mut cfg: C = match path {
        None => C::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("reading config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
    };
    if cfg.format_version() != CONFIG_FORMAT_VERSION {
        return Err(CliError::Usage(format!(
            "config format_version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
            cfg.format_version()
        )));
    }
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The fully resolved document, as echoed into `config.json`.
pub fn echo<C: Serialize>(cfg: &C) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("configs always serialize");
    s.push('\n');
    s
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LosscheckConfig {
    pub format_version: u32,
    pub seed: u64,
    /// Random instances per class count for the identity checks.
    pub instances: usize,
    pub classes: Vec<usize>,
    /// Largest `|c|` in the translation check.
    pub max_shift: f64,
    /// Standard deviation of the random logits.
    pub logit_scale: f64,
    /// Class counts for the permutation enumeration oracle.
    pub oracle_classes: Vec<usize>,
    pub oracle_draws: usize,
    pub identity_tolerance: f64,
    pub invariance_tolerance: f64,
    pub normalization_tolerance: f64,
}

impl Default for LosscheckConfig {
    fn default() -> Self {
        LosscheckConfig {
            format_version: version(),
            seed: 0,
            instances: 100,
            classes: vec![2, 10, 100],
            max_shift: 50.0,
            logit_scale: 3.0,
            oracle_classes: vec![2, 3, 4, 5, 6],
            oracle_draws: 50,
            identity_tolerance: 1e-10,
            invariance_tolerance: 1e-8,
            normalization_tolerance: 1e-9,
        }
    }
}

impl RunConfig for LosscheckConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn validate(&self) -> CliResult<()> {
        if self.instances == 0 || self.oracle_draws == 0 {
            return Err(usage("instances and oracle_draws must be positive"));
        }
        if self.classes.is_empty() || self.classes.contains(&0) {
            return Err(usage("classes must be a nonempty list of positive counts"));
        }
        if self.oracle_classes.iter().any(|&c| c == 0 || c > pld_core::ranking::MAX_ENUMERATE_CLASSES) {
            return Err(usage(format!(
                "oracle_classes must lie in 1..={}",
                pld_core::ranking::MAX_ENUMERATE_CLASSES
            )));
        }
        if !(self.max_shift.is_finite() && self.max_shift >= 0.0 && self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(usage("max_shift must be nonnegative and logit_scale positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub format_version: u32,
    pub seed: u64,
    pub kinds: Vec<LossKind>,
    pub classes: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    /// Central-difference step.
    pub step: f64,
    pub logit_scale: f64,
    /// Bound on the max relative error for every case.
    pub threshold: f64,
    /// Extra PLD teacher temperatures, checked against `pld_threshold`.
    pub pld_temperatures: Vec<f64>,
    pub pld_threshold: f64,
    /// Bound on closed-form vs implemented PLD gradient, absolute.
    pub closed_form_tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            format_version: version(),
            seed: 0,
            kinds: LossKind::ALL.to_vec(),
            classes: vec![2, 10, 100],
            batch_sizes: vec![1, 8],
            trials: 20,
            step: 1e-5,
            logit_scale: 1.0,
            threshold: 1e-5,
            pld_temperatures: vec![0.5, 4.0],
            pld_threshold: 1e-6,
            closed_form_tolerance: 1e-10,
        }
    }
}

impl RunConfig for GradcheckConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn validate(&self) -> CliResult<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(usage(format!("step must be positive, got {}", self.step)));
        }
        if self.trials == 0 || self.kinds.is_empty() || self.classes.is_empty() || self.batch_sizes.is_empty() {
            return Err(usage("trials, kinds, classes and batch_sizes must be nonempty"));
        }
        if self.classes.iter().any(|&c| c < 2) || self.batch_sizes.contains(&0) {
            return Err(usage("classes must be at least 2 and batch sizes positive"));
        }
        if self.pld_temperatures.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(usage("pld_temperatures must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub format_version: u32,
    pub data: BlobSpec,
    pub arch: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            format_version: version(),
            data: BlobSpec::default(),
            arch: vec![16, 256, 256, 10],
            train: TrainConfig { epochs: 10, ..Default::default() },
        }
    }
}

impl RunConfig for TeacherConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub format_version: u32,
    pub data: BlobSpec,
    /// Teacher model JSON; echoed as an absolute path.
    pub teacher: PathBuf,
    pub arch: Vec<usize>,
    pub loss: DistillLossConfig,
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            format_version: version(),
            data: BlobSpec::default(),
            teacher: PathBuf::from("teacher/model.json"),
            arch: vec![16, 32, 10],
            loss: DistillLossConfig::default(),
            train: TrainConfig { epochs: 20, ..Default::default() },
        }
    }
}

impl RunConfig for DistillConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeConfig {
    pub format_version: u32,
    pub slice: SliceSpec,
    /// Random chord triples per (kind, temperature); 0 skips the probe.
    pub convexity_trials: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig { format_version: version(), slice: SliceSpec::default(), convexity_trials: 1000 }
    }
}

impl RunConfig for LandscapeConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.slice.seed = seed;
    }
    fn validate(&self) -> CliResult<()> {
        Ok(self.slice.validate()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub format_version: u32,
    pub seed: u64,
    pub kinds: Vec<LossKind>,
    pub batch: usize,
    pub classes: Vec<usize>,
    pub warmup: usize,
    pub trials: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            format_version: version(),
            seed: 0,
            kinds: vec![LossKind::Ce, LossKind::Kd, LossKind::Dist, LossKind::Pld],
            batch: 256,
            classes: vec![128, 256, 512, 1000, 1024],
            warmup: 3,
            trials: 11,
        }
    }
}

impl RunConfig for BenchConfig {
    fn format_version(&self) -> u32 {
        self.format_version
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn validate(&self) -> CliResult<()> {
        if self.trials == 0 || self.batch == 0 || self.kinds.is_empty() || self.classes.is_empty() {
            return Err(usage("trials, batch, kinds and classes must be nonempty"));
        }
        if self.classes.iter().any(|&c| c < 2) {
            return Err(usage("bench class counts must be at least 2"));
        }
        if self.batch < 2 && self.kinds.contains(&LossKind::Dist) {
            return Err(usage("dist needs a batch of at least 2 rows"));
        }
        Ok(())
    }
}
