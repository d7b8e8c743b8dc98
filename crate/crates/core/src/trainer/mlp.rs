use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::io_util::write_atomic;
use crate::data_model::CompressionSpec;
use crate::error::{Error, Result};

/// Fully connected layer, weights row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// 1 keeps the weight, 0 removes it. Same shape as `weights`.
    pub mask: Vec<u8>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            mask: vec![1; inputs * outputs],
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 0).count()
    }

    /// Zeroes every masked weight.
    pub fn apply_mask(&mut self) {
        for (w, &m) in self.weights.iter_mut().zip(&self.mask) {
            if m == 0 {
                *w = 0.0;
            }
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// Multilayer perceptron with ReLU hidden activations and linear logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    /// Calibrated pre-activation `[min, max]` per layer. When present,
    /// inference saturates every pre-activation to its range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_ranges: Option<Vec<(f64, f64)>>,
    pub compression: CompressionSpec,
}

/// Per-layer gradients, same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }
}

impl Mlp {
    /// All-zero model. `layer_dims` is `[inputs, hidden..., classes]`.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer dims {layer_dims:?} need at least two positive entries"
            )));
        }
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            layers: layer_dims
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
            activation_ranges: None,
            compression: CompressionSpec::NONE,
        })
    }

    /// He-normal weights, zero biases.
    pub fn init(layer_dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut model = Mlp::zeros(layer_dims)?;
        for layer in &mut model.layers {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt())
                .expect("positive standard deviation");
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry is the logits.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&input, &mut z);
            if let Some(ranges) = &self.activation_ranges {
                let (lo, hi) = ranges[l];
                z.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            }
            if l < last {
                input = z.iter().map(|&v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        Ok(out)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pre_activations(x)?.pop().expect("at least one layer"))
    }

    /// The `k` highest-scoring classes, ties broken by ascending label.
    pub fn predict_topk(&self, x: &[f64], k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.num_classes() {
            return Err(Error::Shape(format!(
                "rank depth {k} must lie in 1..={}",
                self.num_classes()
            )));
        }
        let logits = self.logits(x)?;
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        order.truncate(k);
        Ok(order)
    }

    /// Mean softmax cross-entropy over the batch plus `weight_decay / 2 * sum(w^2)`,
    /// and its gradient with respect to every weight and bias.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&[f64], usize)],
        weight_decay: f64,
    ) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let n_layers = self.layers.len();
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut delta = Vec::new();
        let mut next_delta = Vec::new();
        for &(x, y) in batch {
            self.check_input(x)?;
            if y >= self.num_classes() {
                return Err(Error::Invalid(format!("label {y} out of range")));
            }
            acts[0].clear();
            acts[0].extend_from_slice(x);
            for l in 0..n_layers {
                let (done, rest) = acts.split_at_mut(l + 1);
                self.layers[l].affine(&done[l], &mut rest[0]);
                if l + 1 < n_layers {
                    rest[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            let logits = &acts[n_layers];
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let log_norm = max + sum_exp.ln();
            loss += log_norm - logits[y];

            delta.clear();
            delta.extend(logits.iter().map(|z| (z - log_norm).exp()));
            delta[y] -= 1.0;
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let gw = &mut grads.weights[l];
                let gb = &mut grads.biases[l];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    if d != 0.0 {
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    }
                }
                if l > 0 {
                    next_delta.clear();
                    next_delta.resize(layer.inputs, 0.0);
                    for (o, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                            next_delta
                                .iter_mut()
                                .zip(row)
                                .for_each(|(nd, w)| *nd += d * w);
                        }
                    }
                    // ReLU derivative: the stored activation is zero where the unit was off.
                    for (nd, &a) in next_delta.iter_mut().zip(input) {
                        if a <= 0.0 {
                            *nd = 0.0;
                        }
                    }
                    std::mem::swap(&mut delta, &mut next_delta);
                }
            }
        }
        let n = batch.len().max(1) as f64;
        loss /= n;
        let mut l2 = 0.0;
        for (layer, gw) in self.layers.iter().zip(&mut grads.weights) {
            for (g, &w) in gw.iter_mut().zip(&layer.weights) {
                *g = *g / n + weight_decay * w;
                l2 += w * w;
            }
        }
        for gb in &mut grads.biases {
            gb.iter_mut().for_each(|g| *g /= n);
        }
        Ok((loss + 0.5 * weight_decay * l2, grads))
    }

    /// Plain SGD step followed by re-zeroing of masked weights.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) {
        for ((layer, gw), gb) in self
            .layers
            .iter_mut()
            .zip(&grads.weights)
            .zip(&grads.biases)
        {
            layer
                .weights
                .iter_mut()
                .zip(gw)
                .for_each(|(w, g)| *w -= learning_rate * g);
            layer
                .biases
                .iter_mut()
                .zip(gb)
                .for_each(|(b, g)| *b -= learning_rate * g);
            layer.apply_mask();
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Mlp = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("model snapshot: {m}")));
        if self.layer_dims.len() != self.layers.len() + 1 {
            return bad("layer count does not match dims".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if layer.inputs != i
                || layer.outputs != o
                || layer.weights.len() != i * o
                || layer.mask.len() != i * o
                || layer.biases.len() != o
            {
                return bad(format!("layer {l} is not {i}x{o}"));
            }
            if layer.mask.iter().any(|&m| m > 1) {
                return bad(format!("layer {l} mask must be 0/1"));
            }
            if layer
                .weights
                .iter()
                .zip(&layer.mask)
                .any(|(&w, &m)| m == 0 && w != 0.0)
            {
                return bad(format!("layer {l} has a masked non-zero weight"));
            }
        }
        if let Some(r) = &self.activation_ranges {
            if r.len() != self.layers.len() {
                return bad("one activation range per layer required".into());
            }
        }
        self.compression.validate()
    }
}

/// Ranked class labels for one input.
pub fn predict_topk(model: &Mlp, features: &[f64], k: usize) -> Result<Vec<usize>> {
    model.predict_topk(features, k)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_model_ranks_by_label() {
        let m = Mlp::zeros(&[3, 4, 5]).unwrap();
        assert_eq!(m.predict_topk(&[1.0, -2.0, 0.5], 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn identity_layer_prefers_larger_feature() {
        let mut m = Mlp::zeros(&[2, 2]).unwrap();
        m.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(m.predict_topk(&[0.2, 0.9], 2).unwrap(), vec![1, 0]);
        assert_eq!(m.predict_topk(&[0.7, 0.1], 1).unwrap(), vec![0]);
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::zeros(&[2, 3]).unwrap();
        assert!(matches!(
            m.predict_topk(&[0.0, 0.0], 4),
            Err(Error::Shape(_))
        ));
        assert!(matches!(m.predict_topk(&[0.0], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Mlp::init(&[4, 6, 3], &mut rng).unwrap();
        m.layers[0].mask[2] = 0;
        m.layers[0].apply_mask();
        m.activation_ranges = Some(vec![(-1.5, 2.25), (-0.1, 0.3)]);
        let back = Mlp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn snapshot_rejects_masked_nonzero() {
        let mut m = Mlp::zeros(&[2, 2]).unwrap();
        m.layers[0].mask[0] = 0;
        m.layers[0].weights[0] = 1.0;
        assert!(Mlp::from_json(&m.to_json().unwrap()).is_err());
    }

    #[test]
    fn saturation_clamps_logits() {
        let mut m = Mlp::zeros(&[1, 2]).unwrap();
        m.layers[0].weights = vec![10.0, -10.0];
        m.activation_ranges = Some(vec![(-1.0, 1.0)]);
        assert_eq!(m.logits(&[1.0]).unwrap(), vec![1.0, -1.0]);
    }
}
