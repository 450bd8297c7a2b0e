//! Layer hierarchy, sparsity and histogram diffs for the Layers tab.
//!
//! Histograms of a model and its base are rebinned onto shared edges and
//! split per bin into mass both share (`unchanged`), mass only the model has
//! (`gained`) and mass only the base has (`lost`). The change score of a
//! layer is the total-variation distance between the two normalized
//! histograms.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

pub const DEFAULT_BINS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("PathSetMismatch: model {model} differs on paths {paths:?}")]
    PathSetMismatch { model: String, paths: Vec<String> },
    #[error("KindMismatch: {0:?} vs {1:?}")]
    KindMismatch(TensorKind, TensorKind),
    #[error("PathMismatch: {0} vs {1}")]
    PathMismatch(String, String),
    #[error("InvalidHistogram: {0}")]
    InvalidHistogram(String),
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
}

impl LayerError {
    pub fn code(&self) -> &'static str {
        match self {
            LayerError::PathSetMismatch { .. } => "PathSetMismatch",
            LayerError::KindMismatch(..) => "KindMismatch",
            LayerError::PathMismatch(..) => "PathMismatch",
            LayerError::InvalidHistogram(_) => "InvalidHistogram",
            LayerError::UnknownModel(_) => "UnknownModel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Weights,
    Activations,
}

/// Histogram as stored in `layers.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub path: String,
    pub param_count: u64,
    pub zero_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_hist: Option<HistogramData>,
    /// Output of the module owning this tensor, over the activation sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_hist: Option<HistogramData>,
}

/// `layers.json` for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayers {
    pub model: String,
    pub layers: Vec<LayerEntry>,
    /// Instance ids the activation histograms were computed on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activation_sample: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub model: String,
    pub path: String,
    pub param_count: u64,
    pub zero_count: u64,
    pub hist_edges: Vec<f64>,
    /// Bin masses; integral when ingested, fractional after rebinning.
    pub hist_counts: Vec<f64>,
    pub kind: TensorKind,
}

impl TensorSummary {
    pub fn from_entry(model: &str, entry: &LayerEntry, kind: TensorKind) -> Result<Option<Self>, LayerError> {
        let hist = match kind {
            TensorKind::Weights => entry.weight_hist.as_ref(),
            TensorKind::Activations => entry.activation_hist.as_ref(),
        };
        let Some(h) = hist else { return Ok(None) };
        if h.edges.len() != h.counts.len() + 1 || h.counts.is_empty() {
            return Err(LayerError::InvalidHistogram(format!(
                "{model}/{}: {} edges for {} bins",
                entry.path,
                h.edges.len(),
                h.counts.len()
            )));
        }
        if h.edges.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(LayerError::InvalidHistogram(format!("{model}/{}: edges not ascending", entry.path)));
        }
        if entry.zero_count > entry.param_count {
            return Err(LayerError::InvalidHistogram(format!(
                "{model}/{}: zero_count exceeds param_count",
                entry.path
            )));
        }
        Ok(Some(TensorSummary {
            model: model.to_string(),
            path: entry.path.clone(),
            param_count: entry.param_count,
            zero_count: entry.zero_count,
            hist_edges: h.edges.clone(),
            hist_counts: h.counts.iter().map(|c| *c as f64).collect(),
            kind,
        }))
    }

    pub fn sparsity(&self) -> f64 {
        if self.param_count == 0 {
            0.0
        } else {
            self.zero_count as f64 / self.param_count as f64
        }
    }

    pub fn total(&self) -> f64 {
        self.hist_counts.iter().sum()
    }
}

/// Moves each source bin's mass onto `target_edges` in proportion to
/// interval overlap. A zero-width source bin puts its mass into the target
/// bin containing it. Mass outside the target range is dropped.
pub fn rebin(summary: &TensorSummary, target_edges: &[f64]) -> TensorSummary {
    let k = target_edges.len().saturating_sub(1);
    let mut out = vec![0.0; k];
    let src = &summary.hist_edges;
    for (i, &mass) in summary.hist_counts.iter().enumerate() {
        if mass == 0.0 || k == 0 {
            continue;
        }
        let (a, b) = (src[i], src[i + 1]);
        if b <= a {
            if let Some(j) = locate(target_edges, a) {
                out[j] += mass;
            }
            continue;
        }
        // First target bin that can overlap [a, b].
        let start = target_edges[1..].partition_point(|e| *e <= a);
        for j in start..k {
            let (lo, hi) = (target_edges[j], target_edges[j + 1]);
            if lo >= b {
                break;
            }
            let overlap = hi.min(b) - lo.max(a);
            if overlap > 0.0 {
                out[j] += mass * overlap / (b - a);
            }
        }
    }
    TensorSummary {
        hist_edges: target_edges.to_vec(),
        hist_counts: out,
        ..summary.clone()
    }
}

fn locate(edges: &[f64], v: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if v < edges[0] || v > edges[k] {
        return None;
    }
    Some(edges[1..].partition_point(|e| *e <= v).min(k - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffBin {
    pub unchanged: f64,
    pub gained: f64,
    pub lost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffHistogram {
    pub edges: Vec<f64>,
    pub bins: Vec<DiffBin>,
    pub change_score: f64,
}

/// Equal-width edges over the union range of both histograms.
pub fn shared_edges(a: &TensorSummary, b: &TensorSummary) -> Vec<f64> {
    let k = a.hist_counts.len().max(b.hist_counts.len()).max(1);
    let lo = a.hist_edges[0].min(b.hist_edges[0]);
    let hi = a.hist_edges[a.hist_edges.len() - 1].max(b.hist_edges[b.hist_edges.len() - 1]);
    if hi <= lo {
        return vec![lo, lo + 1.0];
    }
    let w = (hi - lo) / k as f64;
    let mut e: Vec<f64> = (0..=k).map(|i| lo + w * i as f64).collect();
    e[k] = hi;
    e
}

fn normalized(masses: &[f64]) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter().map(|m| m / total).collect()
    } else {
        vec![0.0; masses.len()]
    }
}

pub fn diff_histogram(base: &TensorSummary, model: &TensorSummary) -> Result<DiffHistogram, LayerError> {
    if base.kind != model.kind {
        return Err(LayerError::KindMismatch(base.kind, model.kind));
    }
    if base.path != model.path {
        return Err(LayerError::PathMismatch(base.path.clone(), model.path.clone()));
    }
    let edges = shared_edges(base, model);
    let b = normalized(&rebin(base, &edges).hist_counts);
    let m = normalized(&rebin(model, &edges).hist_counts);
    let bins: Vec<DiffBin> = b
        .iter()
        .zip(&m)
        .map(|(bi, mi)| DiffBin {
            unchanged: bi.min(*mi),
            gained: (mi - bi).max(0.0),
            lost: (bi - mi).max(0.0),
        })
        .collect();
    let (tb, tm) = (base.total(), model.total());
    let change_score = if tb == 0.0 || tm == 0.0 {
        if tb == tm { 0.0 } else { 1.0 }
    } else {
        (0.5 * b.iter().zip(&m).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0)
    };
    Ok(DiffHistogram {
        edges,
        bins,
        change_score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub param_count: u64,
    pub zero_count: u64,
    pub sparsity: f64,
}

impl NodeStats {
    fn new(param_count: u64, zero_count: u64) -> Self {
        let sparsity = if param_count == 0 { 0.0 } else { zero_count as f64 / param_count as f64 };
        NodeStats {
            param_count,
            zero_count,
            sparsity,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafSummaries {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<TensorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activations: Option<TensorSummary>,
}

impl LeafSummaries {
    pub fn get(&self, kind: TensorKind) -> Option<&TensorSummary> {
        match kind {
            TensorKind::Weights => self.weights.as_ref(),
            TensorKind::Activations => self.activations.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTreeNode {
    /// Full dot path; empty for the root.
    pub path: String,
    pub children: Vec<LayerTreeNode>,
    pub stats: IndexMap<String, NodeStats>,
    #[serde(skip_serializing_if = "IndexMap::is_empty")]
    pub summaries: IndexMap<String, LeafSummaries>,
}

impl LayerTreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaves(&self) -> Vec<&LayerTreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if n.is_leaf() && !n.path.is_empty() {
                out.push(n);
            }
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn find(&self, path: &str) -> Option<&LayerTreeNode> {
        if self.path == path {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(path))
    }

    pub fn models(&self) -> impl Iterator<Item = &String> {
        self.stats.keys()
    }
}

/// Hierarchy from dot paths; internal counts are sums over descendants.
pub fn build_layer_tree(models: &[ModelLayers]) -> Result<LayerTreeNode, LayerError> {
    let Some(first) = models.first() else {
        return Ok(LayerTreeNode {
            path: String::new(),
            children: Vec::new(),
            stats: IndexMap::new(),
            summaries: IndexMap::new(),
        });
    };
    let reference: BTreeSet<&str> = first.layers.iter().map(|l| l.path.as_str()).collect();
    for m in &models[1..] {
        let paths: BTreeSet<&str> = m.layers.iter().map(|l| l.path.as_str()).collect();
        let diff: Vec<String> = reference.symmetric_difference(&paths).map(|p| p.to_string()).collect();
        if !diff.is_empty() {
            return Err(LayerError::PathSetMismatch {
                model: m.model.clone(),
                paths: diff,
            });
        }
    }

    let mut entries: Vec<BTreeMap<&str, &LayerEntry>> = Vec::with_capacity(models.len());
    for m in models {
        entries.push(m.layers.iter().map(|l| (l.path.as_str(), l)).collect());
    }

    // Path prefixes in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut known: BTreeSet<String> = BTreeSet::new();
    for l in &first.layers {
        let segs: Vec<&str> = l.path.split('.').collect();
        for i in 1..=segs.len() {
            let p = segs[..i].join(".");
            if known.insert(p.clone()) {
                order.push(p);
            }
        }
    }
    let leaf_paths: BTreeSet<&str> = reference;

    fn build(
        path: &str,
        order: &[String],
        leaf_paths: &BTreeSet<&str>,
        models: &[ModelLayers],
        entries: &[BTreeMap<&str, &LayerEntry>],
    ) -> Result<LayerTreeNode, LayerError> {
        let depth = if path.is_empty() { 0 } else { path.split('.').count() };
        let prefix = if path.is_empty() { String::new() } else { format!("{path}.") };
        let child_paths: Vec<&String> = order
            .iter()
            .filter(|p| p.starts_with(&prefix) && p.split('.').count() == depth + 1)
            .collect();
        let children = child_paths
            .into_iter()
            .map(|c| build(c, order, leaf_paths, models, entries))
            .collect::<Result<Vec<_>, _>>()?;

        let mut stats = IndexMap::with_capacity(models.len());
        let mut summaries = IndexMap::new();
        for (m, idx) in models.iter().zip(entries) {
            let (mut params, mut zeros) = (0, 0);
            if leaf_paths.contains(path) {
                let e = idx[path];
                params += e.param_count;
                zeros += e.zero_count;
                summaries.insert(
                    m.model.clone(),
                    LeafSummaries {
                        weights: TensorSummary::from_entry(&m.model, e, TensorKind::Weights)?,
                        activations: TensorSummary::from_entry(&m.model, e, TensorKind::Activations)?,
                    },
                );
            }
            for c in &children {
                params += c.stats[&m.model].param_count;
                zeros += c.stats[&m.model].zero_count;
            }
            stats.insert(m.model.clone(), NodeStats::new(params, zeros));
        }
        Ok(LayerTreeNode {
            path: path.to_string(),
            children,
            stats,
            summaries,
        })
    }

    build("", &order, &leaf_paths, models, &entries)
}

/// Leaf layers by change score against `base`, largest first, ties by path.
pub fn rank_layers(
    tree: &LayerTreeNode,
    base: &str,
    model: &str,
    kind: TensorKind,
    exec: Exec,
) -> Result<Vec<(String, f64)>, LayerError> {
    for id in [base, model] {
        if !tree.stats.contains_key(id) {
            return Err(LayerError::UnknownModel(id.to_string()));
        }
    }
    let leaves = tree.leaves();
    let scored = exec.try_map(&leaves, |leaf| {
        let b = leaf.summaries.get(base).and_then(|s| s.get(kind));
        let m = leaf.summaries.get(model).and_then(|s| s.get(kind));
        match (b, m) {
            (Some(b), Some(m)) => Ok(Some((leaf.path.clone(), diff_histogram(b, m)?.change_score))),
            _ => Ok(None),
        }
    })?;
    let mut out: Vec<(String, f64)> = scored.into_iter().flatten().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCell {
    pub stats: NodeStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<DiffHistogram>,
}

/// Layer tree annotated with per-model diffs against a base, as served to
/// the Layers tab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiffNode {
    pub path: String,
    pub per_model: IndexMap<String, DiffCell>,
    /// Largest change score among this node's leaves, over non-base models.
    pub max_change: f64,
    pub children: Vec<LayerDiffNode>,
}

pub fn diff_tree(tree: &LayerTreeNode, base: &str, kind: TensorKind, exec: Exec) -> Result<LayerDiffNode, LayerError> {
    if !tree.stats.contains_key(base) {
        return Err(LayerError::UnknownModel(base.to_string()));
    }
    // Leaf diffs are independent; compute them up front.
    let leaves = tree.leaves();
    let diffs = exec.try_map(&leaves, |leaf| -> Result<IndexMap<String, DiffHistogram>, LayerError> {
        let mut out = IndexMap::new();
        let Some(b) = leaf.summaries.get(base).and_then(|s| s.get(kind)) else {
            return Ok(out);
        };
        for (model, s) in &leaf.summaries {
            if let Some(m) = s.get(kind) {
                out.insert(model.clone(), diff_histogram(b, m)?);
            }
        }
        Ok(out)
    })?;
    let by_path: BTreeMap<&str, IndexMap<String, DiffHistogram>> =
        leaves.iter().map(|l| l.path.as_str()).zip(diffs).collect();

    fn annotate(
        node: &LayerTreeNode,
        base: &str,
        by_path: &BTreeMap<&str, IndexMap<String, DiffHistogram>>,
    ) -> LayerDiffNode {
        let children: Vec<LayerDiffNode> = node.children.iter().map(|c| annotate(c, base, by_path)).collect();
        let leaf_diffs = by_path.get(node.path.as_str());
        let per_model: IndexMap<String, DiffCell> = node
            .stats
            .iter()
            .map(|(m, stats)| {
                (
                    m.clone(),
                    DiffCell {
                        stats: *stats,
                        diff: leaf_diffs.and_then(|d| d.get(m).cloned()),
                    },
                )
            })
            .collect();
        let own = per_model
            .iter()
            .filter(|(m, _)| m.as_str() != base)
            .filter_map(|(_, c)| c.diff.as_ref().map(|d| d.change_score))
            .fold(0.0, f64::max);
        let max_change = children.iter().map(|c| c.max_change).fold(own, f64::max);
        LayerDiffNode {
            path: node.path.clone(),
            per_model,
            max_change,
            children,
        }
    }

    Ok(annotate(tree, base, &by_path))
}

impl LayerDiffNode {
    /// Orders children (recursively) by `max_change`, largest first, ties by
    /// path.
    pub fn sort_by_change(&mut self) {
        self.children
            .sort_by(|a, b| b.max_change.total_cmp(&a.max_change).then(a.path.cmp(&b.path)));
        for c in &mut self.children {
            c.sort_by_change();
        }
    }
}
