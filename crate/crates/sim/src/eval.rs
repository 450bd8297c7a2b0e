//! Metrics, per-instance outputs and layer summaries of a network.

use lineage_core::behavior::{ModelOutputs, OutputEntry};
use lineage_core::layers::{HistogramData, LayerEntry, ModelLayers, DEFAULT_BINS};
use serde::{Deserialize, Serialize};

use crate::data::{class_name, test_id, SynthDataset};
use crate::net::{argmax, DenseNet};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub accuracy: f64,
    pub sparsity: f64,
    pub size: f64,
    pub latency: f64,
}

/// Metrics of `net` on the test split.
///
/// Sparsity, size and latency count pruned positions (the mask), so a
/// weight that quantization happens to round to zero is still stored and
/// multiplied.
pub fn evaluate_model(net: &DenseNet, data: &SynthDataset) -> Result<SimMetrics, SimError> {
    let total = net.weight_count();
    let active: usize = net.layers.iter().map(|l| l.active_weights()).sum();
    let size: f64 = net
        .layers
        .iter()
        .map(|l| l.active_weights() as f64 * f64::from(l.bits) / 8.0)
        .sum();
    Ok(SimMetrics {
        accuracy: net.accuracy(&data.test)?,
        sparsity: 1.0 - active as f64 / total as f64,
        size,
        latency: active as f64,
    })
}

/// Rounds to 12 significant digits so fixture files stay readable and
/// stable.
pub fn tidy(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let digits = 11 - v.abs().log10().floor() as i32;
    let p = 10f64.powi(digits.clamp(0, 300));
    (v * p).round() / p
}

/// `outputs.json` for `net` over the test split.
pub fn model_outputs(model: &str, net: &DenseNet, data: &SynthDataset) -> Result<ModelOutputs, SimError> {
    let probs = net.probabilities(&data.test.x)?;
    let instances = probs
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let p = row.to_vec();
            OutputEntry {
                id: test_id(i),
                label: Some(class_name(argmax(p.iter().copied()))),
                probs: Some(p),
                text: None,
            }
        })
        .collect();
    Ok(ModelOutputs {
        model: model.to_string(),
        instances,
    })
}

/// Equal-width histogram over the observed range of `values`; a constant
/// input gets the single bin `[v, v + 1]`.
pub fn histogram(values: &[f64], bins: usize) -> HistogramData {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || lo == hi {
        let v = if values.is_empty() { 0.0 } else { lo };
        return HistogramData {
            edges: vec![v, v + 1.0],
            counts: vec![values.len() as u64],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| tidy(lo + width * i as f64)).collect();
    edges[0] = lo;
    edges[bins] = hi;
    let mut counts = vec![0u64; bins];
    for v in values {
        let b = edges[1..].partition_point(|e| e <= v).min(bins - 1);
        counts[b] += 1;
    }
    HistogramData { edges, counts }
}

/// `layers.json` for `net`. Activation histograms summarize each module's
/// output (pre-activation) over the test instances in `sample`.
pub fn layer_summaries(model: &str, net: &DenseNet, data: &SynthDataset, sample: &[usize]) -> Result<ModelLayers, SimError> {
    let batch = data.test.subset(sample);
    let trace = net.trace(&batch.x)?;
    let mut layers = Vec::with_capacity(net.layers.len() * 2);
    for (l, layer) in net.layers.iter().enumerate() {
        let acts: Vec<f64> = trace.pre[l].iter().copied().collect();
        let act_hist = (!acts.is_empty()).then(|| histogram(&acts, DEFAULT_BINS));
        let w: Vec<f64> = layer.weights.iter().copied().collect();
        let b: Vec<f64> = layer.bias.iter().copied().collect();
        layers.push(LayerEntry {
            path: layer.weight_path(),
            param_count: w.len() as u64,
            zero_count: w.iter().filter(|v| **v == 0.0).count() as u64,
            weight_hist: Some(histogram(&w, DEFAULT_BINS)),
            activation_hist: act_hist.clone(),
        });
        layers.push(LayerEntry {
            path: layer.bias_path(),
            param_count: b.len() as u64,
            zero_count: b.iter().filter(|v| **v == 0.0).count() as u64,
            weight_hist: Some(histogram(&b, DEFAULT_BINS)),
            activation_hist: act_hist,
        });
    }
    Ok(ModelLayers {
        model: model.to_string(),
        layers,
        activation_sample: sample.iter().map(|&i| test_id(i)).collect(),
    })
}
