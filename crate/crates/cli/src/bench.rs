use std::hint::black_box;
use std::time::Instant;

use pld_core::losses::{DistillLossConfig, LossKind};
use pld_core::rng::Rng;
use pld_core::RealMat;

use crate::config::{echo, BenchConfig};
use crate::error::CliResult;
use crate::output::{Artifact, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub kind: LossKind,
    pub batch: usize,
    pub classes: usize,
    pub trials: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Wall-clock seconds of one loss + gradient evaluation per trial, after
/// `warmup` untimed runs.
pub fn time_kind(kind: LossKind, batch: usize, classes: usize, warmup: usize, trials: usize, seed: u64) -> CliResult<Timing> {
    let mut rng = Rng::new(seed).fork(classes as u64);
    let s = RealMat::new(batch, classes, rng.normal_vec(batch * classes))?;
    let t = RealMat::new(batch, classes, rng.normal_vec(batch * classes))?;
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
    let loss = DistillLossConfig::of_kind(kind);
    for _ in 0..warmup {
        black_box(loss.evaluate(&s, &t, &labels)?);
    }
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        black_box(loss.evaluate(black_box(&s), &t, &labels)?);
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(Timing {
        kind,
        batch,
        classes,
        trials,
        median: median(&times),
        min: times.iter().cloned().fold(f64::INFINITY, f64::min),
        max: times.iter().cloned().fold(0.0, f64::max),
    })
}

pub fn run_timings(cfg: &BenchConfig) -> CliResult<Vec<Timing>> {
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        for &c in &cfg.classes {
            out.push(time_kind(kind, cfg.batch, c, cfg.warmup, cfg.trials, cfg.seed)?);
        }
    }
    Ok(out)
}

pub fn timings_csv(rows: &[Timing]) -> String {
    let mut out = String::from("kind,batch,classes,trials,median_seconds,min_seconds,max_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e}\n",
            r.kind, r.batch, r.classes, r.trials, r.median, r.min, r.max
        ));
    }
    out
}

/// Timing rows; `bench.csv` is the one output not expected to be
/// byte-identical across runs.
pub fn run(cfg: &BenchConfig) -> CliResult<Outcome> {
    let rows = run_timings(cfg)?;
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "{:<9} N={} C={:<5} median {:.3e}s\n",
            r.kind.name(),
            r.batch,
            r.classes,
            r.median
        ));
    }
    let of = |kind: LossKind| rows.iter().filter(move |r| r.kind == kind);
    for p in of(LossKind::Pld) {
        if let Some(k) = of(LossKind::Kd).find(|k| k.classes == p.classes) {
            summary.push_str(&format!("pld/kd at C={}: {:.2}x\n", p.classes, p.median / k.median));
        }
    }
    let pld: Vec<&Timing> = of(LossKind::Pld).collect();
    if pld.len() >= 2 {
        let x: Vec<f64> = pld.iter().map(|r| r.classes as f64).collect();
        let y: Vec<f64> = pld.iter().map(|r| r.median).collect();
        summary.push_str(&format!("pld log-log exponent in C: {:.3}\n", loglog_slope(&x, &y)));
    }
    Ok(Outcome {
        artifacts: vec![Artifact::new("config.json", echo(cfg)), Artifact::new("bench.csv", timings_csv(&rows))],
        summary,
        failure: None,
    })
}
