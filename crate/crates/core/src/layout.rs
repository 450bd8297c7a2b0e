//! Model Map layout: columns, rows, pixel positions and visual encodings.
//!
//! Columns come either from tree depth (`by_step`) or from a canonical column
//! per operation name (`by_operation`): the deepest depth at which that name
//! occurs, shifted right when needed so a child always sits right of its
//! parent. Rows number the leaves in a deterministic DFS (children by subtree
//! size, largest first, then id) and place internal nodes at the mean of their
//! children. Trees are stacked with a one-row gap.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::store::{ModelStore, StoreError};

pub const EDGE_STOPS: usize = 8;
pub const MIN_RADIUS: f64 = 4.0;
pub const MAX_RADIUS: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    ByStep,
    ByOperation,
}

impl std::str::FromStr for LayoutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "by_step" => Ok(LayoutMode::ByStep),
            "by_operation" => Ok(LayoutMode::ByOperation),
            other => Err(format!("unknown layout mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutOptions {
    pub col_spacing: f64,
    pub row_spacing: f64,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        LayoutOptions {
            col_spacing: 120.0,
            row_spacing: 36.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    SqrtSize,
    LinearColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingScale {
    pub metric: String,
    pub domain: [f64; 2],
    pub range: [f64; 2],
    pub kind: ScaleKind,
}

impl EncodingScale {
    fn fit(store: &ModelStore, metric: &str, kind: ScaleKind) -> Option<Self> {
        let mut values = store.nodes().filter_map(|n| n.metrics.get(metric).copied());
        let first = values.next()?;
        let (lo, hi) = values.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = match kind {
            ScaleKind::SqrtSize => [MIN_RADIUS, MAX_RADIUS],
            ScaleKind::LinearColor => [0.0, 1.0],
        };
        Some(EncodingScale {
            metric: metric.to_string(),
            domain: [lo, hi],
            range,
            kind,
        })
    }

    /// Maps a value into the range; a degenerate domain maps to the midpoint.
    pub fn apply(&self, v: f64) -> f64 {
        let [d0, d1] = self.domain;
        let [r0, r1] = self.range;
        if d1 <= d0 {
            return (r0 + r1) / 2.0;
        }
        let t = ((v - d0) / (d1 - d0)).clamp(0.0, 1.0);
        let t = match self.kind {
            ScaleKind::SqrtSize => t.sqrt(),
            ScaleKind::LinearColor => t,
        };
        r0 + (r1 - r0) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub column: usize,
    pub row: f64,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub color_value: Option<f64>,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStop {
    pub t: f64,
    pub width: f64,
    pub color_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEdge {
    pub parent: String,
    pub child: String,
    pub stops: Vec<EdgeStop>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLayout {
    pub mode: LayoutMode,
    pub options: LayoutOptions,
    pub color_scale: Option<EncodingScale>,
    pub size_scale: Option<EncodingScale>,
    pub nodes: IndexMap<String, LayoutNode>,
    pub edges: Vec<LayoutEdge>,
}

/// Edge width at an endpoint, derived from the node radius.
fn edge_width(radius: f64) -> f64 {
    radius / 2.0
}

/// Columns per node. For `ByOperation`, every operation name gets the
/// deepest depth at which it occurs as its canonical column.
pub fn columns(store: &ModelStore, mode: LayoutMode) -> HashMap<String, usize> {
    let order = store.preorder();
    let mut cols: HashMap<String, usize> = HashMap::with_capacity(order.len());
    match mode {
        LayoutMode::ByStep => {
            for id in order {
                cols.insert(id.to_string(), store.depth(id).expect("id from store"));
            }
        }
        LayoutMode::ByOperation => {
            let mut canonical: HashMap<&str, usize> = HashMap::new();
            for n in store.nodes() {
                if let Some(op) = &n.operation {
                    let d = store.depth(&n.id).expect("id from store");
                    let c = canonical.entry(op.name.as_str()).or_insert(d);
                    *c = (*c).max(d);
                }
            }
            for id in order {
                let n = store.node(id).expect("id from store");
                let col = match (&n.parent_id, &n.operation) {
                    (Some(p), Some(op)) => (cols[p] + 1).max(canonical[op.name.as_str()]),
                    _ => 0,
                };
                cols.insert(id.to_string(), col);
            }
        }
    }
    cols
}

/// Leaf-numbered rows with internal nodes at the mean of their children.
pub fn rows(store: &ModelStore) -> HashMap<String, f64> {
    let sizes = store.subtree_sizes();
    let sorted_children = |id: &str| -> Vec<&str> {
        let mut kids: Vec<&str> = store.children(id).iter().map(String::as_str).collect();
        kids.sort_by(|a, b| sizes[b].cmp(&sizes[a]).then(a.cmp(b)));
        kids
    };

    let mut rows: HashMap<String, f64> = HashMap::with_capacity(store.len());
    let mut next_leaf = 0usize;
    for root in store.roots() {
        let mut order = Vec::new();
        let mut stack = vec![root.as_str()];
        while let Some(id) = stack.pop() {
            order.push(id);
            let kids = sorted_children(id);
            if kids.is_empty() {
                rows.insert(id.to_string(), next_leaf as f64);
                next_leaf += 1;
            }
            stack.extend(kids.into_iter().rev());
        }
        for id in order.into_iter().rev() {
            let kids = store.children(id);
            if !kids.is_empty() {
                let mean = kids.iter().map(|k| rows[k.as_str()]).sum::<f64>() / kids.len() as f64;
                rows.insert(id.to_string(), mean);
            }
        }
        // One-row gap between trees.
        next_leaf += 1;
    }
    rows
}

/// `enabled = None` enables every model.
pub fn compute_layout(
    store: &ModelStore,
    mode: LayoutMode,
    color_metric: Option<&str>,
    size_metric: Option<&str>,
    enabled: Option<&BTreeSet<String>>,
    options: LayoutOptions,
) -> Result<MapLayout, StoreError> {
    if let Some(m) = color_metric {
        store.metric(m)?;
    }
    if let Some(m) = size_metric {
        store.metric(m)?;
    }
    let color_scale = color_metric.and_then(|m| EncodingScale::fit(store, m, ScaleKind::LinearColor));
    let size_scale = size_metric.and_then(|m| EncodingScale::fit(store, m, ScaleKind::SqrtSize));

    let cols = columns(store, mode);
    let rows = rows(store);

    let mut nodes = IndexMap::with_capacity(store.len());
    for n in store.nodes() {
        let column = cols[&n.id];
        let row = rows[&n.id];
        let radius = match (&size_scale, size_metric.and_then(|m| n.metrics.get(m))) {
            (Some(scale), Some(v)) => scale.apply(*v),
            _ => MIN_RADIUS,
        };
        let color_value = match (&color_scale, color_metric.and_then(|m| n.metrics.get(m))) {
            (Some(scale), Some(v)) => Some(scale.apply(*v)),
            _ => None,
        };
        nodes.insert(
            n.id.clone(),
            LayoutNode {
                column,
                row,
                x: column as f64 * options.col_spacing,
                y: row * options.row_spacing,
                radius,
                color_value,
                enabled: enabled.is_none_or(|e| e.contains(&n.id)),
            },
        );
    }

    let mut edges = Vec::with_capacity(store.len());
    for n in store.nodes() {
        let Some(parent) = &n.parent_id else { continue };
        let (p, c): (&LayoutNode, &LayoutNode) = (&nodes[parent], &nodes[&n.id]);
        let stops = (0..EDGE_STOPS)
            .map(|i| {
                let t = i as f64 / (EDGE_STOPS - 1) as f64;
                let lerp = |a: f64, b: f64| a + (b - a) * t;
                EdgeStop {
                    t,
                    width: lerp(edge_width(p.radius), edge_width(c.radius)),
                    color_value: match (p.color_value, c.color_value) {
                        (Some(a), Some(b)) => Some(lerp(a, b)),
                        _ => None,
                    },
                }
            })
            .collect();
        edges.push(LayoutEdge {
            parent: parent.clone(),
            child: n.id.clone(),
            stops,
        });
    }

    Ok(MapLayout {
        mode,
        options,
        color_scale,
        size_scale,
        nodes,
        edges,
    })
}

/// Tooltip rows: every declared metric in declaration order, then the
/// producing operation (or `root`).
pub fn node_tooltip(store: &ModelStore, id: &str) -> Result<Vec<(String, String)>, StoreError> {
    let node = store.node(id)?;
    let mut out: Vec<(String, String)> = store
        .metrics()
        .iter()
        .map(|m| {
            let value = match node.metrics.get(&m.name) {
                Some(v) if m.unit.is_empty() => crate::store::format_number(*v),
                Some(v) => format!("{} {}", crate::store::format_number(*v), m.unit),
                None => "n/a".to_string(),
            };
            (m.name.clone(), value)
        })
        .collect();
    let op = node
        .operation
        .as_ref()
        .map(|o| o.label())
        .unwrap_or_else(|| "root".to_string());
    out.push(("operation".to_string(), op));
    Ok(out)
}
