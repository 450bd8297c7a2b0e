//! Random experiment forests for property tests.

#![allow(dead_code)]

use lineage_core::store::{load_store, ModelStore};
use rand::Rng;
use serde_json::{json, Map, Value};

const OPS: [&str; 5] = ["prune", "quantize", "calibrate", "finetune", "restore"];

/// A forest of `n` nodes with up to three roots. Metrics are occasionally
/// missing.
pub fn random_forest<R: Rng>(rng: &mut R, n: usize) -> ModelStore {
    let roots = rng.gen_range(1..=3.min(n.max(1)));
    let mut models = Vec::with_capacity(n);
    for i in 0..n {
        let mut metrics = Map::new();
        for (name, lo, hi) in [("accuracy", 0.5, 1.0), ("size", 1.0, 100.0), ("latency", 1.0, 10.0)] {
            if rng.gen_bool(0.9) {
                let v: f64 = rng.gen_range(lo..hi);
                metrics.insert(name.into(), json!((v * 1000.0).round() / 1000.0));
            }
        }
        let (parent, operation) = if i < roots {
            (Value::Null, Value::Null)
        } else {
            let p = rng.gen_range(0..i);
            let name = OPS[rng.gen_range(0..OPS.len())];
            let sparsity = [0.1, 0.5, 0.9][rng.gen_range(0..3)];
            let params = if name == "prune" {
                json!({"sparsity": sparsity})
            } else {
                json!({})
            };
            (json!(format!("m{p}")), json!({"name": name, "parameters": params}))
        };
        models.push(json!({"id": format!("m{i}"), "parent": parent, "operation": operation, "metrics": metrics}));
    }
    load_store(
        &json!({
            "schema_version": 1,
            "metrics": [
                {"name": "accuracy", "unit": "", "objective": "maximize", "default_encoding": "color"},
                {"name": "size", "unit": "MB", "objective": "minimize", "default_encoding": "size"},
                {"name": "latency", "unit": "ms", "objective": "minimize"}
            ],
            "models": models
        })
        .to_string(),
    )
    .expect("generated forest is valid")
}

use std::collections::{HashMap, HashSet};

use lineage_core::layout::{LayoutMode, MapLayout};

/// Checks the structural layout contract; returns the first violation.
pub fn check_layout(store: &ModelStore, layout: &MapLayout) -> Result<(), String> {
    if layout.nodes.len() != store.len() {
        return Err(format!("{} nodes laid out for {} models", layout.nodes.len(), store.len()));
    }
    let mut seen = HashSet::new();
    for (id, n) in &layout.nodes {
        if !seen.insert((n.column, n.row.to_bits())) {
            return Err(format!("{id} shares position ({}, {})", n.column, n.row));
        }
    }
    for node in store.nodes() {
        if let Some(p) = &node.parent_id {
            let (pc, cc) = (layout.nodes[p].column, layout.nodes[&node.id].column);
            if cc <= pc {
                return Err(format!("edge {p}->{}: columns {pc} -> {cc}", node.id));
            }
        }
    }
    if layout.edges.len() != store.len() - store.roots().len() {
        return Err("edge count differs from parent links".into());
    }
    if layout.mode == LayoutMode::ByOperation {
        // Canonical column per operation name, recomputed from depths.
        let mut canonical: HashMap<&str, usize> = HashMap::new();
        for node in store.nodes() {
            if let Some(op) = &node.operation {
                let d = store.depth(&node.id).unwrap();
                let c = canonical.entry(op.name.as_str()).or_insert(0);
                *c = (*c).max(d);
            }
        }
        for node in store.nodes() {
            let (Some(p), Some(op)) = (&node.parent_id, &node.operation) else { continue };
            let col = layout.nodes[&node.id].column;
            let canon = canonical[op.name.as_str()];
            let shifted = layout.nodes[p].column + 1 > canon;
            if col < canon || (!shifted && col != canon) {
                return Err(format!("{} ({}) at column {col}, canonical {canon}", node.id, op.name));
            }
        }
    }
    Ok(())
}
