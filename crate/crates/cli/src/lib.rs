//! Command-line front end for `pld-core`: identity and gradient checks,
//! teacher training, distillation, landscape slices and benchmarks.
//!
//! Every command reads an optional JSON config (`--config`), applies
//! `--seed` on top of it, computes all outputs in memory, then writes them
//! to `--out` together with the resolved config as `config.json`.

pub mod bench;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod landscape;
pub mod losscheck;
pub mod output;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{load, DistillConfig};
use crate::error::{exit, CliResult};
use crate::output::{write_artifacts, Outcome};

#[derive(Debug, Parser)]
#[command(name = "pld", version, about = "Plackett-Luce distillation lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config document; defaults are used for absent fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the run seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "pld-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduction identities, translation invariance and permutation oracle.
    Losscheck(Common),
    /// Finite-difference gradient checks for every loss.
    Gradcheck(Common),
    /// Train a teacher with cross-entropy.
    TrainTeacher(Common),
    /// Distill a student from a saved teacher.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Teacher model JSON; overrides the config.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// 2-D loss slices and convexity probes.
    Landscape(Common),
    /// Loss + gradient timings.
    Bench(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Losscheck(c)
            | Command::Gradcheck(c)
            | Command::TrainTeacher(c)
            | Command::Landscape(c)
            | Command::Bench(c) => c,
            Command::Distill { common, .. } => common,
        }
    }
}

/// Runs the command without touching the output directory.
pub fn execute(command: &Command) -> CliResult<Outcome> {
    let c = command.common();
    let (path, seed) = (c.config.as_deref(), c.seed);
    match command {
        Command::Losscheck(_) => losscheck::run(&load(path, seed)?),
        Command::Gradcheck(_) => gradcheck::run(&load(path, seed)?),
        Command::TrainTeacher(_) => train::run_teacher(&load(path, seed)?),
        Command::Distill { teacher, .. } => {
            let mut cfg: DistillConfig = load(path, seed)?;
            if let Some(t) = teacher {
                cfg.teacher = t.clone();
            }
            cfg.teacher = train::resolve_teacher(&cfg.teacher)?;
            train::run_distill(&cfg)
        }
        Command::Landscape(_) => landscape::run(&load(path, seed)?),
        Command::Bench(_) => bench::run(&load(path, seed)?),
    }
}

/// Executes, prints the summary, writes outputs and returns the exit code.
pub fn main_with(cli: Cli) -> u8 {
    let outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("pld: {e}");
            return e.exit_code();
        }
    };
    print!("{}", outcome.summary);
    let out = &cli.command.common().out;
    if let Err(e) = write_artifacts(out, &outcome.artifacts) {
        eprintln!("pld: {e}");
        return e.exit_code();
    }
    match outcome.failure {
        Some(f) => {
            eprintln!("pld: verification failed: {f}");
            exit::VERIFICATION
        }
        None => exit::OK,
    }
}
