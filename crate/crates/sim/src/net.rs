//! Dense ReLU network with a softmax head, trained by full-batch gradient
//! descent on cross-entropy.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Split, SynthDataset};
use crate::SimError;

pub const FULL_PRECISION_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// `false` at pruned positions; gradient steps keep those at zero.
    pub mask: Array2<bool>,
    /// Storage bits per weight.
    pub bits: u32,
}

impl Layer {
    pub fn weight_path(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_path(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn active_weights(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

/// Per-layer forward intermediates for a batch.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer (`inputs[0]` is the batch).
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer; the last one holds the logits.
    pub pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            epochs: 200,
            lr: 0.1,
            seed: 0,
        }
    }
}

pub fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

/// Row-wise softmax, shifted by the row max for stability.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<DenseNet, SimError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(SimError::DimensionMismatch(format!("invalid layer sizes {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    name: format!("fc{}", i + 1),
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                    mask: Array2::from_elem((fan_out, fan_in), true),
                    bits: FULL_PRECISION_BITS,
                }
            })
            .collect();
        Ok(DenseNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn trace(&self, x: &Array2<f64>) -> Result<Trace, SimError> {
        if x.ncols() != self.input_dim() {
            return Err(SimError::DimensionMismatch(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights.t()) + &layer.bias;
            inputs.push(h);
            h = if i + 1 < self.layers.len() { relu(&z) } else { z.clone() };
            pre.push(z);
        }
        Ok(Trace { inputs, pre })
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>, SimError> {
        let t = self.trace(x)?;
        Ok(softmax(t.pre.last().expect("at least one layer")))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, split: &Split) -> Result<(f64, Gradients), SimError> {
        let t = self.trace(&split.x)?;
        let probs = softmax(t.pre.last().expect("at least one layer"));
        let n = split.len() as f64;
        let mut loss = 0.0;
        let mut delta = probs.clone();
        for (i, &y) in split.y.iter().enumerate() {
            loss -= probs[[i, y]].max(f64::MIN_POSITIVE).ln();
            delta[[i, y]] -= 1.0;
        }
        loss /= n;
        delta /= n;

        let mut gw = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut gb = vec![Array1::zeros(0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            gw[l] = delta.t().dot(&t.inputs[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights);
                back.zip_mut_with(&t.pre[l - 1], |d, z| {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        Ok((loss, Gradients { weights: gw, bias: gb }))
    }

    pub fn loss(&self, split: &Split) -> Result<f64, SimError> {
        Ok(self.loss_and_gradients(split)?.0)
    }

    /// One gradient step; masked positions stay at zero.
    pub fn step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            layer.weights.scaled_add(-lr, gw);
            layer.bias.scaled_add(-lr, gb);
            layer.weights.zip_mut_with(&layer.mask, |w, m| {
                if !*m {
                    *w = 0.0;
                }
            });
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>, SimError> {
        let p = self.probabilities(x)?;
        Ok(p.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }

    pub fn accuracy(&self, split: &Split) -> Result<f64, SimError> {
        if split.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(&split.x)?;
        let hits = pred.iter().zip(&split.y).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / split.len() as f64)
    }
}

/// First index of the maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Trains a `dim → hidden → classes` network; returns it with the loss
/// before training and after every epoch.
pub fn train_mlp(data: &SynthDataset, config: &TrainConfig) -> Result<(DenseNet, Vec<f64>), SimError> {
    if config.epochs == 0 {
        return Err(SimError::InvalidParameter("epochs must be at least 1".into()));
    }
    let dims = [data.config.dim, config.hidden, data.config.classes];
    let mut net = DenseNet::init(&dims, config.seed)?;
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grads) = net.loss_and_gradients(&data.train)?;
        losses.push(loss);
        net.step(&grads, config.lr);
    }
    losses.push(net.loss(&data.train)?);
    Ok((net, losses))
}
