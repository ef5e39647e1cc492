//! Dense feed-forward classifier: ReLU hidden layers, identity output.
//!
//! Layer `l` maps `x -> W x + b` with `W` stored row-major as
//! `out_dim x in_dim`. Initialization draws every weight uniformly from
//! `[-sqrt(6 / in_dim), sqrt(6 / in_dim)]`, layer by layer, row by row, from
//! the supplied generator; biases start at zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{affine_rows, RealMat};
use crate::rng::Rng;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-layer parameter gradients, same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`
    /// (after ReLU for hidden layers).
    acts: Vec<Vec<f64>>,
    rows: usize,
}

impl Trace {
    /// Fails if any logit is non-finite.
    pub fn logits(&self, classes: usize) -> Result<RealMat> {
        let last = self.acts.last().expect("trace has input");
        RealMat::new(self.rows, classes, last.clone())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activation: String,
    layers: Vec<Layer>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return invalid("a model needs at least an input and an output size");
    }
    if sizes.contains(&0) {
        return invalid("layer sizes must be positive");
    }
    Ok(())
}

impl MlpModel {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    weights: (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpModel { sizes: sizes.to_vec(), layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weights: vec![0.0; w[0] * w[1]], bias: vec![0.0; w[1]] })
            .collect();
        Ok(MlpModel { sizes: sizes.to_vec(), layers })
    }

    pub fn from_layers(sizes: &[usize], layers: Vec<Layer>) -> Result<Self> {
        check_sizes(sizes)?;
        if layers.len() != sizes.len() - 1 {
            return invalid("layer count does not match layer sizes");
        }
        for (l, w) in layers.iter().zip(sizes.windows(2)) {
            if l.weights.len() != w[0] * w[1] || l.bias.len() != w[1] {
                return invalid(format!("layer {}x{} has mismatched parameter lengths", w[1], w[0]));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return invalid("non-finite model parameter");
            }
        }
        Ok(MlpModel { sizes: sizes.to_vec(), layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty sizes")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, features: &RealMat) -> Result<RealMat> {
        self.forward_trace(features)?.logits(self.output_dim())
    }

    pub fn forward_trace(&self, features: &RealMat) -> Result<Trace> {
        if features.cols() != self.input_dim() {
            return invalid(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.input_dim()
            ));
        }
        let n = features.rows();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.as_slice().to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (d_in, d_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut out = vec![0.0; n * d_out];
            affine_rows(&acts[l], n, d_in, &layer.weights, &layer.bias, &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        Ok(Trace { acts, rows: n })
    }

    /// Parameter gradients of `sum(grad_logits * logits)` at `features`.
    pub fn backward(&self, features: &RealMat, grad_logits: &RealMat) -> Result<Gradients> {
        let trace = self.forward_trace(features)?;
        self.backward_trace(&trace, grad_logits)
    }

    pub fn backward_trace(&self, trace: &Trace, grad_logits: &RealMat) -> Result<Gradients> {
        let n = trace.rows;
        if grad_logits.rows() != n || grad_logits.cols() != self.output_dim() {
            return invalid(format!(
                "upstream gradient is {}x{}, expected {n}x{}",
                grad_logits.rows(),
                grad_logits.cols(),
                self.output_dim()
            ));
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_logits.as_slice().to_vec();
        for l in (0..self.layers.len()).rev() {
            let (d_in, d_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.acts[l];
            let w = &self.layers[l].weights;
            let mut gw = vec![0.0; d_out * d_in];
            let mut gb = vec![0.0; d_out];
            for (dr, xr) in delta.chunks_exact(d_out).zip(input.chunks_exact(d_in)) {
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &x) in gw[o * d_in..(o + 1) * d_in].iter_mut().zip(xr) {
                        *g += d * x;
                    }
                }
            }
            grads.push(Layer { weights: gw, bias: gb });

            if l > 0 {
                let mut prev = vec![0.0; n * d_in];
                for (dr, pr) in delta.chunks_exact(d_out).zip(prev.chunks_exact_mut(d_in)) {
                    for (o, &d) in dr.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (p, &wv) in pr.iter_mut().zip(&w[o * d_in..(o + 1) * d_in]) {
                            *p += d * wv;
                        }
                    }
                }
                // ReLU: the stored activation is zero exactly where the unit was off.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            layer_sizes: self.sizes.clone(),
            activation: "relu".into(),
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)
            .map_err(|e| crate::Error::InvalidArgument(format!("model document: {e}")))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return invalid(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            ));
        }
        if doc.activation != "relu" {
            return invalid(format!("unsupported activation `{}`", doc.activation));
        }
        MlpModel::from_layers(&doc.layer_sizes, doc.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_of(model: &MlpModel, x: &RealMat, up: &RealMat) -> f64 {
        let out = model.forward(x).unwrap();
        out.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = MlpModel::zeros(&[3, 5, 2]).unwrap();
        let x = RealMat::new(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        assert!(m.forward(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_is_affine() {
        let layer = Layer { weights: vec![1.0, 0.0, 0.0, 2.0], bias: vec![0.5, -1.0] };
        let m = MlpModel::from_layers(&[2, 2], vec![layer]).unwrap();
        let x = RealMat::new(1, 2, vec![3.0, 4.0]).unwrap();
        // no activation on the output layer, negative values survive
        assert_eq!(m.forward(&x).unwrap().as_slice(), &[3.5, 7.0]);
        let neg = RealMat::new(1, 2, vec![-3.0, -4.0]).unwrap();
        assert_eq!(m.forward(&neg).unwrap().as_slice(), &[-2.5, -9.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(m.forward(&RealMat::zeros(1, 4)).is_err());
        assert!(m.backward(&RealMat::zeros(1, 3), &RealMat::zeros(1, 3)).is_err());
        assert!(MlpModel::zeros(&[3]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let m = MlpModel::new(&[4, 6, 3], &mut Rng::new(1)).unwrap();
        let x = RealMat::new(2, 4, Rng::new(2).normal_vec(8)).unwrap();
        let g = m.backward(&x, &RealMat::zeros(2, 3)).unwrap();
        assert!(g.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_model_grads_are_outer_products() {
        let m = MlpModel::new(&[3, 2], &mut Rng::new(1)).unwrap();
        let x = RealMat::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let up = RealMat::new(2, 2, vec![0.1, -0.2, 0.3, 0.4]).unwrap();
        let g = m.backward(&x, &up).unwrap();
        // dW[o][i] = sum_n up[n][o] * x[n][i]
        for o in 0..2 {
            for i in 0..3 {
                let expected: f64 = (0..2).map(|n| up.get(n, o) * x.get(n, i)).sum();
                assert!((g.layers[0].weights[o * 3 + i] - expected).abs() < 1e-15);
            }
            let expected_b: f64 = (0..2).map(|n| up.get(n, o)).sum();
            assert!((g.layers[0].bias[o] - expected_b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_layer_grads_match_finite_differences() {
        let mut rng = Rng::new(3);
        let mut m = MlpModel::new(&[5, 7, 4], &mut rng).unwrap();
        let x = RealMat::new(3, 5, rng.normal_vec(15)).unwrap();
        let up = RealMat::new(3, 4, rng.normal_vec(12)).unwrap();
        let g = m.backward(&x, &up).unwrap();
        let h = 1e-6;
        for probe in 0..5 {
            let l = probe % 2;
            let idx = rng.below(m.layers[l].weights.len());
            let orig = m.layers[l].weights[idx];
            m.layers[l].weights[idx] = orig + h;
            let up_loss = loss_of(&m, &x, &up);
            m.layers[l].weights[idx] = orig - h;
            let down_loss = loss_of(&m, &x, &up);
            m.layers[l].weights[idx] = orig;
            let fd = (up_loss - down_loss) / (2.0 * h);
            let a = g.layers[l].weights[idx];
            assert!((fd - a).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-5, "layer {l} idx {idx}: {a} vs {fd}");
        }
    }

    #[test]
    fn init_is_bounded_and_deterministic() {
        let a = MlpModel::new(&[16, 32, 10], &mut Rng::new(9)).unwrap();
        let b = MlpModel::new(&[16, 32, 10], &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].bias.iter().all(|&v| v == 0.0));
        assert_eq!(a.parameter_count(), 16 * 32 + 32 + 32 * 10 + 10);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = MlpModel::new(&[4, 3, 2], &mut Rng::new(4)).unwrap();
        let text = m.to_json();
        assert_eq!(MlpModel::from_json(&text).unwrap(), m);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(MlpModel::from_json(&bumped).is_err());
        assert!(MlpModel::from_json("{}").is_err());
    }
}
