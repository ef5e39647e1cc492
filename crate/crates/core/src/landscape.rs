//! 2-D loss slices `s(a, b) = t + a d1 + b d2` around unit-norm teacher
//! logits `t`, with `d1`, `d2` random orthonormal directions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::{DistillLossConfig, LossKind};
use crate::numerics::{argmax, dot, norm, RealMat};
use crate::rng::Rng;

/// Redraws allowed when a direction pair is numerically degenerate.
pub const MAX_REDRAWS: usize = 8;
/// Slack added to the chord side of the convexity inequality.
pub const CONVEXITY_TOL: f64 = 1e-9;

const FRAME_STREAM: u64 = 21;
const PROBE_STREAM: u64 = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceSpec {
    pub classes: usize,
    /// Grid points per axis; odd values put the origin on the grid.
    pub resolution: usize,
    /// Half-width of the grid in units of `|t|`.
    pub range: f64,
    pub temperatures: Vec<f64>,
    pub kinds: Vec<LossKind>,
    pub seed: u64,
}

impl Default for SliceSpec {
    fn default() -> Self {
        SliceSpec {
            classes: 100,
            resolution: 41,
            range: 5.0,
            temperatures: vec![2.0, 1.0, 0.5, 0.1],
            kinds: vec![LossKind::Ce, LossKind::Kd, LossKind::Dist, LossKind::Pld],
            seed: 0,
        }
    }
}

impl SliceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return invalid("slice needs at least two classes");
        }
        if self.resolution < 3 {
            return invalid("slice resolution must be at least 3");
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return invalid(format!("range must be positive, got {}", self.range));
        }
        if self.temperatures.is_empty() || self.kinds.is_empty() {
            return invalid("need at least one temperature and one loss kind");
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return invalid(format!("temperatures must be positive, got {t}"));
        }
        Ok(())
    }

    /// Symmetric grid coordinates, `range * |t| * (2i / (R-1) - 1)`.
    pub fn coordinates(&self) -> Vec<f64> {
        let half = (self.resolution - 1) as f64;
        (0..self.resolution)
            .map(|i| self.range * (2.0 * i as f64 - half) / half)
            .collect()
    }
}

/// The plane a slice lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFrame {
    pub teacher: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// `argmax(t)`, lowest index on ties.
    pub label: usize,
}

impl SliceFrame {
    /// Draws `t`, normalizes it, then orthonormalizes two further draws.
    pub fn new(classes: usize, seed: u64) -> Result<SliceFrame> {
        if classes < 2 {
            return invalid("slice needs at least two classes");
        }
        let mut rng = Rng::new(seed).fork(FRAME_STREAM);
        let mut teacher = rng.normal_vec(classes);
        let n = norm(&teacher);
        if !(n > 0.0) {
            return Err(Error::Construction("teacher logits drew the zero vector".into()));
        }
        teacher.iter_mut().for_each(|v| *v /= n);
        let (d1, d2) = orthonormal_pair(|| (rng.normal_vec(classes), rng.normal_vec(classes)))?;
        let label = argmax(&teacher);
        Ok(SliceFrame { teacher, d1, d2, label })
    }

    pub fn point(&self, a: f64, b: f64) -> Vec<f64> {
        self.teacher
            .iter()
            .zip(&self.d1)
            .zip(&self.d2)
            .map(|((t, x), y)| t + a * x + b * y)
            .collect()
    }
}

fn gram_schmidt(a: &[f64], b: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let unit = |v: Vec<f64>, scale: f64| -> Option<Vec<f64>> {
        let n = norm(&v);
        (n.is_finite() && n > 1e-8 * scale).then(|| v.into_iter().map(|x| x / n).collect())
    };
    let d1 = unit(a.to_vec(), norm(a))?;
    let mut d2 = b.to_vec();
    // Two projection passes keep the residual overlap at roundoff level.
    for _ in 0..2 {
        let p = dot(&d2, &d1);
        d2.iter_mut().zip(&d1).for_each(|(y, x)| *y -= p * x);
    }
    let d2 = unit(d2, norm(b))?;
    Some((d1, d2))
}

fn orthonormal_pair(mut draw: impl FnMut() -> (Vec<f64>, Vec<f64>)) -> Result<(Vec<f64>, Vec<f64>)> {
    for _ in 0..=MAX_REDRAWS {
        let (a, b) = draw();
        if let Some(pair) = gram_schmidt(&a, &b) {
            return Ok(pair);
        }
    }
    Err(Error::Construction(format!(
        "direction pair stayed degenerate after {MAX_REDRAWS} redraws"
    )))
}

/// Loss settings used on the slice: no CE mixing, DIST without the
/// intra-class term (each point is a batch of one), and `temperature` as
/// the PLD teacher temperature and the KD / DIST softmax temperature.
pub fn slice_loss_config(kind: LossKind, temperature: f64) -> DistillLossConfig {
    DistillLossConfig {
        kind,
        ce_mix: 0.0,
        kd_temperature: temperature,
        teacher_temperature: temperature,
        dist_temperature: temperature,
        dist_gamma: 0.0,
        ..Default::default()
    }
}

fn eval_at(frame: &SliceFrame, cfg: &DistillLossConfig, teacher: &RealMat, s: Vec<f64>) -> Result<f64> {
    let student = RealMat::new(1, s.len(), s)?;
    Ok(cfg.evaluate(&student, teacher, &[frame.label])?.loss)
}

fn teacher_row(frame: &SliceFrame) -> Result<RealMat> {
    RealMat::new(1, frame.teacher.len(), frame.teacher.clone())
}

/// Loss of the slice point `(a, b)` under `cfg`.
pub fn evaluate_point(frame: &SliceFrame, cfg: &DistillLossConfig, a: f64, b: f64) -> Result<f64> {
    eval_at(frame, cfg, &teacher_row(frame)?, frame.point(a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    pub kind: LossKind,
    pub temperature: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `values[(i, j)] = L(s(alphas[i], betas[j]))`.
    pub values: RealMat,
}

impl SliceGrid {
    /// Grid index of the smallest value, first in row-major order on ties.
    pub fn argmin(&self) -> (usize, usize) {
        let flat = self.values.as_slice();
        let mut best = 0;
        for (i, &v) in flat.iter().enumerate() {
            if v < flat[best] {
                best = i;
            }
        }
        (best / self.values.cols(), best % self.values.cols())
    }

    pub fn origin(&self) -> Option<f64> {
        let i = self.alphas.iter().position(|&a| a == 0.0)?;
        let j = self.betas.iter().position(|&b| b == 0.0)?;
        Some(self.values.get(i, j))
    }

    pub fn corners(&self) -> [f64; 4] {
        let (r, c) = (self.values.rows() - 1, self.values.cols() - 1);
        [self.values.get(0, 0), self.values.get(0, c), self.values.get(r, 0), self.values.get(r, c)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub frame: SliceFrame,
    /// Ordered by loss kind, then temperature, as configured.
    pub grids: Vec<SliceGrid>,
}

fn grid_for(frame: &SliceFrame, spec: &SliceSpec, kind: LossKind, temperature: f64) -> Result<SliceGrid> {
    let coords = spec.coordinates();
    let cfg = slice_loss_config(kind, temperature);
    cfg.validate()?;
    let teacher = teacher_row(frame)?;
    let r = coords.len();
    let mut values = Vec::with_capacity(r * r);
    for &a in &coords {
        for &b in &coords {
            let v = eval_at(frame, &cfg, &teacher, frame.point(a, b))?;
            if !v.is_finite() {
                return Err(Error::Construction(format!("{kind} is not finite at ({a}, {b})")));
            }
            values.push(v);
        }
    }
    Ok(SliceGrid {
        kind,
        temperature,
        alphas: coords.clone(),
        betas: coords,
        values: RealMat::new(r, r, values)?,
    })
}

/// Evaluates every configured (kind, temperature) pair on one shared frame.
pub fn make_slice(spec: &SliceSpec) -> Result<Slice> {
    spec.validate()?;
    let frame = SliceFrame::new(spec.classes, spec.seed)?;
    let mut grids = Vec::with_capacity(spec.kinds.len() * spec.temperatures.len());
    for &kind in &spec.kinds {
        for &temperature in &spec.temperatures {
            grids.push(grid_for(&frame, spec, kind, temperature)?);
        }
    }
    Ok(Slice { frame, grids })
}

/// One grid of `kind` per configured temperature, all on the same frame.
pub fn temperature_sweep(spec: &SliceSpec, kind: LossKind) -> Result<Vec<SliceGrid>> {
    let spec = SliceSpec { kinds: vec![kind], ..spec.clone() };
    Ok(make_slice(&spec)?.grids)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityProbe {
    pub kind: LossKind,
    pub temperature: f64,
    pub trials: usize,
    pub violations: usize,
    /// Largest `L(mix) - chord` seen; nonpositive when the loss is convex.
    pub worst_gap: f64,
}

/// `L(l p + (1-l) q) - (l L(p) + (1-l) L(q))` along the slice plane.
fn chord_gap(
    frame: &SliceFrame,
    cfg: &DistillLossConfig,
    teacher: &RealMat,
    p: (f64, f64),
    q: (f64, f64),
    lambda: f64,
) -> Result<f64> {
    let mix = (lambda * p.0 + (1.0 - lambda) * q.0, lambda * p.1 + (1.0 - lambda) * q.1);
    let lp = eval_at(frame, cfg, teacher, frame.point(p.0, p.1))?;
    let lq = eval_at(frame, cfg, teacher, frame.point(q.0, q.1))?;
    let lm = eval_at(frame, cfg, teacher, frame.point(mix.0, mix.1))?;
    Ok(lm - (lambda * lp + (1.0 - lambda) * lq))
}

/// Counts random `(p, q, l)` triples in the grid square violating
/// `L(l p + (1-l) q) <= l L(p) + (1-l) L(q) + CONVEXITY_TOL`, once per
/// configured temperature. Every temperature sees the same triples.
pub fn line_convexity_probe(kind: LossKind, spec: &SliceSpec, trials: usize) -> Result<Vec<ConvexityProbe>> {
    if trials == 0 {
        return invalid("convexity probe needs at least one trial");
    }
    spec.validate()?;
    let frame = SliceFrame::new(spec.classes, spec.seed)?;
    let teacher = teacher_row(&frame)?;
    let r = spec.range;
    let mut out = Vec::with_capacity(spec.temperatures.len());
    for &temperature in &spec.temperatures {
        let cfg = slice_loss_config(kind, temperature);
        let mut rng = Rng::new(spec.seed).fork(PROBE_STREAM);
        let mut violations = 0;
        let mut worst_gap = f64::NEG_INFINITY;
        for _ in 0..trials {
            let p = (rng.uniform(-r, r), rng.uniform(-r, r));
            let q = (rng.uniform(-r, r), rng.uniform(-r, r));
            let lambda = rng.next_f64();
            let gap = chord_gap(&frame, &cfg, &teacher, p, q, lambda)?;
            worst_gap = worst_gap.max(gap);
            if !(gap <= CONVEXITY_TOL) {
                violations += 1;
            }
        }
        out.push(ConvexityProbe { kind, temperature, trials, violations, worst_gap });
    }
    Ok(out)
}

/// `alpha,beta,loss_kind,temperature,value`, grids in order, each row-major.
pub fn slice_csv(grids: &[SliceGrid]) -> String {
    let mut out = String::from("alpha,beta,loss_kind,temperature,value\n");
    for g in grids {
        for (i, a) in g.alphas.iter().enumerate() {
            for (j, b) in g.betas.iter().enumerate() {
                out.push_str(&format!("{a},{b},{},{},{}\n", g.kind, g.temperature, g.values.get(i, j)));
            }
        }
    }
    out
}
