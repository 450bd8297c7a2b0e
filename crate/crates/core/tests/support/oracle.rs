//! Brute-force reference for variable-set minimality.
//!
//! Every alignment of the op paths is a walk through the lattice of path
//! positions where each step advances a non-empty subset of paths. For each
//! slot the oracle enumerates every subset of the candidate variables and
//! keeps the cheapest one that explains the slot. Memoizing the best
//! cost-to-go per lattice point keeps the search exhaustive but tractable.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use lineage_core::store::{load_store, ModelStore, Operation};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

/// (count, complexity), compared lexicographically.
pub type OracleCost = (u32, u32);

#[derive(Clone, Debug, PartialEq)]
enum Candidate {
    Presence,
    OpType,
    Param(String),
}

impl Candidate {
    fn weight(&self) -> u32 {
        match self {
            Candidate::Param(_) => 1,
            Candidate::Presence => 2,
            Candidate::OpType => 3,
        }
    }
}

fn param_value(op: &Operation, key: &str) -> String {
    op.parameters.get(key).map_or("<unset>".to_string(), |v| format!("{v:?}"))
}

/// Whether a variable subset explains a slot: presence differences need the
/// presence variable, and every pair of present operations with different
/// signatures must be told apart by the type or one chosen parameter.
fn explains(cells: &[Option<&Operation>], chosen: &[&Candidate]) -> bool {
    let present: Vec<&Operation> = cells.iter().flatten().copied().collect();
    let mixed = !present.is_empty() && present.len() < cells.len();
    if mixed && !chosen.contains(&&Candidate::Presence) {
        return false;
    }
    for (i, a) in present.iter().enumerate() {
        for b in &present[i + 1..] {
            if a.signature() == b.signature() {
                continue;
            }
            let told_apart = chosen.iter().any(|c| match c {
                Candidate::Presence => false,
                Candidate::OpType => a.signature() != b.signature(),
                Candidate::Param(k) => param_value(a, k) != param_value(b, k),
            });
            if !told_apart {
                return false;
            }
        }
    }
    true
}

fn candidates(cells: &[Option<&Operation>]) -> Vec<Candidate> {
    let present: Vec<&Operation> = cells.iter().flatten().copied().collect();
    let mut out = Vec::new();
    if !present.is_empty() && present.len() < cells.len() {
        out.push(Candidate::Presence);
    }
    let names: BTreeSet<&str> = present.iter().map(|o| o.name.as_str()).collect();
    if names.len() > 1 {
        out.push(Candidate::OpType);
    } else {
        let keys: BTreeSet<&String> = present.iter().flat_map(|o| o.parameters.keys()).collect();
        out.extend(keys.into_iter().map(|k| Candidate::Param(k.clone())));
    }
    out
}

fn add(a: OracleCost, b: OracleCost) -> OracleCost {
    (a.0 + b.0, a.1 + b.1)
}

/// Cheapest explaining subset for one slot, by enumeration.
pub fn slot_min_cost(cells: &[Option<&Operation>]) -> OracleCost {
    let pool = candidates(cells);
    let mut best: Option<OracleCost> = None;
    for mask in 0u32..(1 << pool.len()) {
        let chosen: Vec<&Candidate> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).map(|i| &pool[i]).collect();
        if !explains(cells, &chosen) {
            continue;
        }
        let cost = (chosen.len() as u32, chosen.iter().map(|c| c.weight()).sum());
        if best.map_or(true, |b| cost < b) {
            best = Some(cost);
        }
    }
    best.expect("the full pool explains every slot")
}

/// Minimum explaining cost over all alignments of `paths`.
pub fn min_cost(paths: &[Vec<Operation>]) -> OracleCost {
    let mut memo: HashMap<Vec<usize>, OracleCost> = HashMap::new();
    let mut slot_memo: HashMap<Vec<Option<String>>, OracleCost> = HashMap::new();
    let start = vec![0; paths.len()];
    search(paths, &start, &mut memo, &mut slot_memo)
}

fn search(
    paths: &[Vec<Operation>],
    pos: &[usize],
    memo: &mut HashMap<Vec<usize>, OracleCost>,
    slot_memo: &mut HashMap<Vec<Option<String>>, OracleCost>,
) -> OracleCost {
    if pos.iter().zip(paths).all(|(p, path)| *p == path.len()) {
        return (0, 0);
    }
    if let Some(c) = memo.get(pos) {
        return *c;
    }
    let open: Vec<usize> = (0..paths.len()).filter(|&i| pos[i] < paths[i].len()).collect();
    let mut best: Option<OracleCost> = None;
    for mask in 1u32..(1 << open.len()) {
        let mut next = pos.to_vec();
        let mut cells: Vec<Option<&Operation>> = vec![None; paths.len()];
        for (bit, &i) in open.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                cells[i] = Some(&paths[i][pos[i]]);
                next[i] += 1;
            }
        }
        let key: Vec<Option<String>> = cells.iter().map(|c| c.map(Operation::signature)).collect();
        let here = match slot_memo.get(&key) {
            Some(c) => *c,
            None => {
                let c = slot_min_cost(&cells);
                slot_memo.insert(key, c);
                c
            }
        };
        let total = add(here, search(paths, &next, memo, slot_memo));
        if best.map_or(true, |b| total < b) {
            best = Some(total);
        }
    }
    let best = best.expect("at least one path is open");
    memo.insert(pos.to_vec(), best);
    best
}

fn random_op<R: Rng>(rng: &mut R) -> serde_json::Value {
    let sparsity = [0.5, 0.9][rng.gen_range(0..2)];
    let method = ["magnitude", "layer"][rng.gen_range(0..2)];
    let bits = [4, 8][rng.gen_range(0..2)];
    match rng.gen_range(0..5) {
        0 => json!({"name": "prune", "parameters": {"sparsity": sparsity}}),
        1 => json!({"name": "prune", "parameters": {
            "sparsity": sparsity,
            "method": method
        }}),
        2 => json!({"name": "quantize", "parameters": {"bits": bits}}),
        3 => json!({"name": "calibrate", "parameters": {}}),
        _ => json!({"name": "finetune", "parameters": {}}),
    }
}

/// A random tree with paths of at most `max_depth` operations, and a
/// selection of 1 to `max_models` of its nodes.
pub fn random_case<R: Rng>(rng: &mut R, max_models: usize, max_depth: usize) -> (ModelStore, BTreeSet<String>) {
    let mut models = vec![json!({"id": "n0", "parent": null, "operation": null, "metrics": {"accuracy": 0.9}})];
    let mut depth = vec![0usize];
    let size = rng.gen_range(2..=14);
    for i in 1..size {
        let open: Vec<usize> = (0..depth.len()).filter(|&d| depth[d] < max_depth).collect();
        let parent = *open.choose(rng).expect("root is always open");
        depth.push(depth[parent] + 1);
        models.push(json!({
            "id": format!("n{i}"),
            "parent": format!("n{parent}"),
            "operation": random_op(rng),
            "metrics": {"accuracy": rng.gen_range(0.5..1.0)}
        }));
    }
    let store = load_store(
        &json!({
            "schema_version": 1,
            "metrics": [{"name": "accuracy", "unit": "", "objective": "maximize"}],
            "models": models
        })
        .to_string(),
    )
    .expect("generated store is valid");
    let ids: Vec<String> = store.ids().map(str::to_string).collect();
    let k = rng.gen_range(1..=max_models.min(ids.len()));
    let selection = ids.choose_multiple(rng, k).cloned().collect();
    (store, selection)
}
