use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Adaptive-moment optimizer with decoupled weight decay and bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return invalid("betas must lie in [0, 1)");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return invalid("eps must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return invalid("weight decay must be nonnegative");
        }
        Ok(())
    }
}

/// First and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

/// One update of every tensor in `params` with the matching `grads`.
///
/// ```text
/// p <- p * (1 - lr * wd)
/// m <- b1 m + (1 - b1) g;   v <- b2 v + (1 - b2) g^2
/// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
pub fn step_optimizer(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamWState,
    cfg: &AdamWConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return invalid("parameter and gradient shapes disagree");
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.second = state.first.clone();
    } else if state.first.len() != params.len()
        || state.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return invalid("optimizer state does not match parameter shapes");
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] * decay - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = vec![1.0, -2.0, 3.5];
        let mut state = AdamWState::default();
        for _ in 0..5 {
            step_optimizer(&mut [&mut p], &[&[0.0, 0.0, 0.0]], &mut state, &cfg).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_is_sign_scaled() {
        let cfg = AdamWConfig { weight_decay: 0.0, learning_rate: 0.1, ..Default::default() };
        for g in [0.37, -2.5, 1e-3] {
            let mut p = vec![0.0];
            let mut state = AdamWState::default();
            step_optimizer(&mut [&mut p], &[&[g]], &mut state, &cfg).unwrap();
            let expected = -0.1 * g / (g.abs() + cfg.eps);
            assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
        }
    }

    #[test]
    fn quadratic_bowl_decreases_monotonically() {
        let cfg = AdamWConfig { learning_rate: 0.05, weight_decay: 0.0, ..Default::default() };
        let scales = [1.0, 4.0, 0.25];
        let mut p = vec![3.0, -2.0, 1.5];
        let f = |p: &[f64]| p.iter().zip(&scales).map(|(x, a)| 0.5 * a * x * x).sum::<f64>();
        let mut state = AdamWState::default();
        let mut last = f(&p);
        for _ in 0..100 {
            let g: Vec<f64> = p.iter().zip(&scales).map(|(x, a)| a * x).collect();
            step_optimizer(&mut [&mut p], &[&g], &mut state, &cfg).unwrap();
            let now = f(&p);
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let cfg = AdamWConfig { learning_rate: 0.1, weight_decay: 0.5, ..Default::default() };
        let mut p = vec![2.0];
        step_optimizer(&mut [&mut p], &[&[0.0]], &mut AdamWState::default(), &cfg).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let mut p = vec![0.0];
        let mut s = AdamWState::default();
        let bad = AdamWConfig { learning_rate: 0.0, ..Default::default() };
        assert!(step_optimizer(&mut [&mut p], &[&[1.0]], &mut s, &bad).is_err());
        let ok = AdamWConfig::default();
        assert!(step_optimizer(&mut [&mut p], &[&[1.0, 2.0]], &mut s, &ok).is_err());
    }
}
