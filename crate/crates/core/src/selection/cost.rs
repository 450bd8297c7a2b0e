//! Variable cost model and the per-slot variable rule.

use std::collections::BTreeSet;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::store::Operation;

use super::align::column_names;

/// Lexicographic cost: fewer variables first, then lower complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cost {
    pub count: u32,
    pub complexity: u32,
}

impl Cost {
    pub const ZERO: Cost = Cost {
        count: 0,
        complexity: 0,
    };

    pub fn of(weight: u32) -> Cost {
        Cost {
            count: 1,
            complexity: weight,
        }
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            count: self.count + rhs.count,
            complexity: self.complexity + rhs.complexity,
        }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

pub const PARAM_WEIGHT: u32 = 1;
pub const PRESENCE_WEIGHT: u32 = 2;
pub const PIPELINE_WEIGHT: u32 = 2;
pub const OP_TYPE_WEIGHT: u32 = 3;

/// Label for a parameter key an operation does not set.
pub const UNSET: &str = "unset";

pub(crate) fn param_label(op: &Operation, key: &str) -> String {
    op.parameters
        .get(key)
        .map(|v| v.to_string())
        .unwrap_or_else(|| UNSET.to_string())
}

/// Smallest set of parameter keys that tells apart every pair of operations
/// with different signatures. Ties go to the set that comes first in key
/// order (keys ordered by first appearance).
pub fn min_key_cover(ops: &[&Operation]) -> Vec<String> {
    let mut keys: Vec<&str> = Vec::new();
    for op in ops {
        for k in op.parameters.keys() {
            if !keys.contains(&k.as_str()) {
                keys.push(k);
            }
        }
    }
    let mut distinct: Vec<&Operation> = Vec::new();
    let mut sigs = BTreeSet::new();
    for op in ops {
        if sigs.insert(op.signature()) {
            distinct.push(op);
        }
    }
    if distinct.len() < 2 {
        return Vec::new();
    }
    let labels: Vec<Vec<String>> = distinct
        .iter()
        .map(|op| keys.iter().map(|k| param_label(op, k)).collect())
        .collect();

    let n = keys.len();
    assert!(n < 32, "operations with 32+ parameter keys");
    let mut best: Option<u32> = None;
    for mask in 1u32..(1 << n) {
        if let Some(b) = best {
            if mask.count_ones() > b.count_ones()
                || (mask.count_ones() == b.count_ones() && mask.reverse_bits() <= b.reverse_bits())
            {
                continue;
            }
        }
        let separates = (0..labels.len()).all(|a| {
            (a + 1..labels.len())
                .all(|b| (0..n).any(|k| mask & (1 << k) != 0 && labels[a][k] != labels[b][k]))
        });
        if separates {
            best = Some(mask);
        }
    }
    let mask = best.expect("full key set separates distinct signatures");
    (0..n)
        .filter(|k| mask & (1 << k) != 0)
        .map(|k| keys[k].to_string())
        .collect()
}

/// What a slot needs to explain its differences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotNeeds {
    pub presence: bool,
    pub op_type: bool,
    pub param_keys: Vec<String>,
}

impl SlotNeeds {
    pub fn cost(&self) -> Cost {
        let mut c = Cost::ZERO;
        if self.presence {
            c = c + Cost::of(PRESENCE_WEIGHT);
        }
        if self.op_type {
            c = c + Cost::of(OP_TYPE_WEIGHT);
        }
        for _ in &self.param_keys {
            c = c + Cost::of(PARAM_WEIGHT);
        }
        c
    }
}

/// Per-slot rule: a presence variable when some models lack the slot, an
/// operation-type variable when present names differ, otherwise the fewest
/// parameter variables that separate the present operations.
pub fn slot_needs(col: &[Option<&Operation>]) -> SlotNeeds {
    let present: Vec<&Operation> = col.iter().flatten().copied().collect();
    let presence = !present.is_empty() && present.len() < col.len();
    let names = column_names(col);
    let op_type = names.len() > 1;
    let param_keys = if op_type {
        Vec::new()
    } else {
        min_key_cover(&present)
    };
    SlotNeeds {
        presence,
        op_type,
        param_keys,
    }
}

pub fn slot_cost(col: &[Option<&Operation>]) -> Cost {
    slot_needs(col).cost()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_orders_count_first() {
        assert!(Cost::of(OP_TYPE_WEIGHT) < Cost::of(PARAM_WEIGHT) + Cost::of(PARAM_WEIGHT));
        assert!(Cost::of(PARAM_WEIGHT) < Cost::of(PRESENCE_WEIGHT));
    }

    #[test]
    fn key_cover_drops_redundant_keys() {
        let a = Operation::new("q").with("bits", 8.0).with("scheme", "sym");
        let b = Operation::new("q").with("bits", 4.0).with("scheme", "asym");
        let c = Operation::new("q").with("bits", 4.0).with("scheme", "asym");
        assert_eq!(min_key_cover(&[&a, &b, &c]), ["bits"]);
    }

    #[test]
    fn key_cover_needs_two() {
        let a = Operation::new("q").with("x", 1.0).with("y", 1.0);
        let b = Operation::new("q").with("x", 2.0).with("y", 1.0);
        let c = Operation::new("q").with("x", 1.0).with("y", 2.0);
        assert_eq!(min_key_cover(&[&a, &b, &c]), ["x", "y"]);
    }

    #[test]
    fn missing_key_counts_as_difference() {
        let a = Operation::new("prune").with("sparsity", 0.5);
        let b = Operation::new("prune").with("sparsity", 0.5).with("layer", "fc2");
        assert_eq!(min_key_cover(&[&a, &b]), ["layer"]);
    }

    #[test]
    fn needs() {
        let p = Operation::new("prune");
        let q = Operation::new("quantize");
        let n = slot_needs(&[Some(&p), None]);
        assert_eq!(n.cost(), Cost::of(PRESENCE_WEIGHT));
        let n = slot_needs(&[Some(&p), Some(&q), None]);
        assert!(n.presence && n.op_type);
        assert_eq!(slot_cost(&[Some(&p), Some(&p)]), Cost::ZERO);
    }
}
