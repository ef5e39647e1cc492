//! Plackett-Luce distillation losses with closed-form gradients, baseline
//! distillation losses, ranking oracles, and a small training lab.
//!
//! Modules, bottom up:
//!
//! - [`numerics`], [`rng`]: stable softmax / log-sum-exp primitives and a seeded generator.
//! - [`ranking`]: teacher-optimal rankings and the Plackett-Luce likelihood, with a
//!   brute-force enumeration oracle.
//! - [`losses`]: every loss kernel, logit standardization, gradient checking.
//! - [`distill`]: synthetic data, a dense classifier, AdamW, teacher training and
//!   student distillation.
//! - [`landscape`]: 2-D loss slices, temperature sweeps and convexity probes.

pub mod distill;
pub mod error;
pub mod landscape;
pub mod losses;
pub mod numerics;
pub mod ranking;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{RealMat, RealVec};
