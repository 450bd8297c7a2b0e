//! Compression operators. Each is a pure function of its inputs.

use std::collections::BTreeMap;

use lineage_core::store::Operation;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Split, SynthDataset};
use crate::net::{DenseNet, Layer, FULL_PRECISION_BITS};
use crate::SimError;

/// Zeroes the `floor(sparsity * N)` smallest-magnitude weights over all
/// layers (biases excluded). Ties go to the lower layer index, then the
/// lower flat index. Existing zeros take part in the ranking.
pub fn prune_global_magnitude(net: &DenseNet, sparsity: f64) -> Result<DenseNet, SimError> {
    check_sparsity(sparsity)?;
    let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(net.weight_count());
    for (l, layer) in net.layers.iter().enumerate() {
        for (i, w) in layer.weights.iter().enumerate() {
            ranked.push((w.abs(), l, i));
        }
    }
    let k = (sparsity * ranked.len() as f64).floor() as usize;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = net.clone();
    for &(_, l, i) in &ranked[..k] {
        zero_at(&mut out.layers[l], i);
    }
    Ok(out)
}

/// Magnitude pruning inside individual weight tensors, keyed by layer name
/// or weight path.
pub fn prune_layer(net: &DenseNet, sparsities: &BTreeMap<String, f64>) -> Result<DenseNet, SimError> {
    let mut out = net.clone();
    for (path, &s) in sparsities {
        check_sparsity(s)?;
        let l = net
            .layers
            .iter()
            .position(|layer| layer.name == *path || layer.weight_path() == *path)
            .ok_or_else(|| SimError::UnknownPath(path.clone()))?;
        let layer = &mut out.layers[l];
        let mut ranked: Vec<(f64, usize)> = layer.weights.iter().enumerate().map(|(i, w)| (w.abs(), i)).collect();
        let k = (s * ranked.len() as f64).floor() as usize;
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &ranked[..k] {
            zero_at(layer, i);
        }
    }
    Ok(out)
}

fn zero_at(layer: &mut Layer, flat: usize) {
    let cols = layer.weights.ncols();
    layer.weights[[flat / cols, flat % cols]] = 0.0;
    layer.mask[[flat / cols, flat % cols]] = false;
}

fn check_sparsity(s: f64) -> Result<(), SimError> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(SimError::InvalidParameter(format!("sparsity {s} outside [0, 1)")))
    }
}

/// Symmetric per-tensor uniform quantization of the weights. Values are
/// stored dequantized. All-zero tensors are left alone.
pub fn quantize_uniform(net: &DenseNet, bits: u32) -> Result<DenseNet, SimError> {
    if !(2..=16).contains(&bits) {
        return Err(SimError::InvalidParameter(format!("bits {bits} outside 2..=16")));
    }
    let mut out = net.clone();
    for layer in &mut out.layers {
        if let Some(scale) = quant_scale(&layer.weights, bits) {
            let qmax = f64::from((1u32 << (bits - 1)) - 1);
            // f64::round rounds half away from zero; adding 0.0 folds -0.0
            // into 0.0.
            layer.weights.mapv_inplace(|w| (w / scale).round().clamp(-qmax, qmax) * scale + 0.0);
        }
        layer.bits = bits;
    }
    Ok(out)
}

/// `max|w| / (2^(bits-1) - 1)`, or `None` for an all-zero tensor.
pub fn quant_scale(weights: &Array2<f64>, bits: u32) -> Option<f64> {
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    (max > 0.0).then(|| max / f64::from((1u32 << (bits - 1)) - 1))
}

/// Copies the listed tensors from `base`. A path is a tensor path
/// (`fc1.weight`, `fc1.bias`) or a layer name for both of its tensors.
pub fn restore_layers(net: &DenseNet, base: &DenseNet, paths: &[String]) -> Result<DenseNet, SimError> {
    let mut out = net.clone();
    for path in paths {
        let (name, part) = match path.rsplit_once('.') {
            Some((n, p @ ("weight" | "bias"))) => (n, Some(p)),
            _ => (path.as_str(), None),
        };
        let l = out
            .layers
            .iter()
            .position(|layer| layer.name == name)
            .ok_or_else(|| SimError::UnknownPath(path.clone()))?;
        let src = base
            .layers
            .iter()
            .find(|layer| layer.name == name)
            .ok_or_else(|| SimError::UnknownPath(path.clone()))?;
        let dst = &mut out.layers[l];
        if src.weights.dim() != dst.weights.dim() {
            return Err(SimError::ShapeMismatch(path.clone()));
        }
        if part != Some("bias") {
            dst.weights = src.weights.clone();
            dst.mask = src.mask.clone();
            dst.bits = src.bits;
        }
        if part != Some("weight") {
            dst.bias = src.bias.clone();
        }
    }
    Ok(out)
}

/// Bias correction: layer by layer, shifts each bias so the mean
/// pre-activation over `sample` matches `base`. Corrected activations are
/// fed forward before the next layer is matched.
pub fn calibrate_biases(net: &DenseNet, base: &DenseNet, sample: &Split) -> Result<DenseNet, SimError> {
    if sample.is_empty() {
        return Err(SimError::InvalidParameter("calibration sample is empty".into()));
    }
    let target = base.trace(&sample.x)?;
    let mut out = net.clone();
    let mut h = sample.x.clone();
    let last = out.layers.len() - 1;
    for (l, layer) in out.layers.iter_mut().enumerate() {
        let z = h.dot(&layer.weights.t()) + &layer.bias;
        let shift = target.pre[l].mean_axis(ndarray::Axis(0)).expect("non-empty")
            - z.mean_axis(ndarray::Axis(0)).expect("non-empty");
        layer.bias += &shift;
        let z = z + &shift;
        h = if l < last { crate::net::relu(&z) } else { z };
    }
    Ok(out)
}

/// Full-batch gradient steps on the train split. Pruned positions stay at
/// zero. The result is no longer on a quantization grid.
pub fn finetune(net: &DenseNet, data: &SynthDataset, steps: usize, lr: f64) -> Result<DenseNet, SimError> {
    let mut out = net.clone();
    if steps == 0 {
        return Ok(out);
    }
    for _ in 0..steps {
        let (_, grads) = out.loss_and_gradients(&data.train)?;
        out.step(&grads, lr);
    }
    for layer in &mut out.layers {
        layer.bits = FULL_PRECISION_BITS;
    }
    Ok(out)
}

/// One step of a scenario tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SimOperation {
    PruneGlobal { sparsity: f64 },
    PruneLayer { sparsities: BTreeMap<String, f64> },
    Quantize { bits: u32 },
    Restore { paths: Vec<String> },
    Calibrate { sample_size: usize },
    Finetune { steps: usize, lr: f64 },
}

impl SimOperation {
    /// Applies the operation to `net`. `base` is the root model of the
    /// tree; `seed` drives any sampling.
    pub fn apply(&self, net: &DenseNet, base: &DenseNet, data: &SynthDataset, seed: u64) -> Result<DenseNet, SimError> {
        match self {
            SimOperation::PruneGlobal { sparsity } => prune_global_magnitude(net, *sparsity),
            SimOperation::PruneLayer { sparsities } => prune_layer(net, sparsities),
            SimOperation::Quantize { bits } => quantize_uniform(net, *bits),
            SimOperation::Restore { paths } => restore_layers(net, base, paths),
            SimOperation::Calibrate { sample_size } => {
                let idx = data.sample_train(*sample_size, seed);
                calibrate_biases(net, base, &data.train.subset(&idx))
            }
            SimOperation::Finetune { steps, lr } => finetune(net, data, *steps, *lr),
        }
    }

    /// The record written to `experiments.json`.
    pub fn to_operation(&self) -> Operation {
        match self {
            SimOperation::PruneGlobal { sparsity } => Operation::new("prune")
                .with("method", "global_magnitude")
                .with("sparsity", *sparsity),
            SimOperation::PruneLayer { sparsities } => {
                let mut op = Operation::new("prune").with("method", "layer_magnitude");
                if sparsities.len() == 1 {
                    let (layer, s) = sparsities.iter().next().expect("one entry");
                    op = op.with("sparsity", *s).with("layer", layer.as_str());
                } else {
                    for (layer, s) in sparsities {
                        op = op.with(format!("sparsity.{layer}"), *s);
                    }
                }
                op
            }
            SimOperation::Quantize { bits } => Operation::new("quantize").with("bits", f64::from(*bits)),
            SimOperation::Restore { paths } => Operation::new("restore").with("layers", paths.join(",")),
            SimOperation::Calibrate { sample_size } => {
                Operation::new("calibrate").with("samples", *sample_size as f64)
            }
            SimOperation::Finetune { steps, lr } => Operation::new("finetune")
                .with("steps", *steps as f64)
                .with("lr", *lr),
        }
    }
}
