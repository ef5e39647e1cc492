use pld_core::landscape::{line_convexity_probe, make_slice, slice_csv, ConvexityProbe};

use crate::config::{echo, LandscapeConfig};
use crate::error::CliResult;
use crate::output::{Artifact, Outcome};

pub fn convexity_csv(probes: &[ConvexityProbe]) -> String {
    let mut out = String::from("loss_kind,temperature,trials,violations,worst_gap\n");
    for p in probes {
        out.push_str(&format!("{},{},{},{},{:e}\n", p.kind, p.temperature, p.trials, p.violations, p.worst_gap));
    }
    out
}

/// Slice grids for every configured kind and temperature, plus a chord
/// convexity report. Violations are reported, not treated as failures:
/// only PLD is expected to be convex.
pub fn run(cfg: &LandscapeConfig) -> CliResult<Outcome> {
    let slice = make_slice(&cfg.slice)?;
    let mut artifacts = vec![
        Artifact::new("config.json", echo(cfg)),
        Artifact::new("landscape.csv", slice_csv(&slice.grids)),
    ];
    let mut summary = format!(
        "{} grids of {}x{} over {} classes\n",
        slice.grids.len(),
        cfg.slice.resolution,
        cfg.slice.resolution,
        cfg.slice.classes
    );
    if cfg.convexity_trials > 0 {
        let mut probes = Vec::new();
        for &kind in &cfg.slice.kinds {
            probes.extend(line_convexity_probe(kind, &cfg.slice, cfg.convexity_trials)?);
        }
        for p in &probes {
            summary.push_str(&format!(
                "convexity {:<9} T={:<4} violations {}/{}\n",
                p.kind.name(),
                p.temperature,
                p.violations,
                p.trials
            ));
        }
        artifacts.push(Artifact::new("convexity.csv", convexity_csv(&probes)));
    }
    Ok(Outcome { artifacts, summary, failure: None })
}
