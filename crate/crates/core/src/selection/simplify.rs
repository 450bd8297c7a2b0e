//! Rewrites that shrink a variable set toward something chartable.
//!
//! * conditional merge: a presence variable and a variable defined only
//!   where that operation is present collapse into one categorical variable
//!   with an `absent` value;
//! * same-operation accumulation: a run of consecutive slots applying the
//!   same operation with a combinable parameter folds into one variable
//!   holding the combined parameter;
//! * cumulative merge: when the selection is a chain of successive
//!   operations, all per-slot variables become one ordinal pipeline stage.
//!
//! Conditional merges always apply. The other two only run while more than
//! two variables remain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::store::{format_number, Operation};

use super::infer::{dedupe_names, ABSENT_FLAG, NOT_APPLICABLE};
use super::{sort_labels, AlignedSlots, Variable, VariableKind};

pub const ABSENT: &str = "absent";
pub const ROOT_STAGE: &str = "root";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Successive sparsities compose as `1 - Π(1 - s)`.
    Sparsity,
    /// Labels joined with `+`.
    Concat,
}

impl Combiner {
    fn combine(self, labels: &[String]) -> String {
        match self {
            Combiner::Sparsity => {
                let kept: Option<f64> = labels
                    .iter()
                    .map(|l| l.parse::<f64>().ok().map(|s| 1.0 - s))
                    .product();
                match kept {
                    Some(k) => format_number(round_label(1.0 - k)),
                    None => labels.join("+"),
                }
            }
            Combiner::Concat => labels.join("+"),
        }
    }
}

fn round_label(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyConfig {
    /// Parameter key → how repeated applications combine.
    pub combinable: BTreeMap<String, Combiner>,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        SimplifyConfig {
            combinable: [("sparsity".to_string(), Combiner::Sparsity)].into(),
        }
    }
}

pub fn simplify_variables(
    variables: &[Variable],
    slots: &AlignedSlots,
    config: &SimplifyConfig,
) -> Vec<Variable> {
    let mut vars = variables.to_vec();
    loop {
        let mut changed = conditional_merge(&mut vars);
        if vars.len() > 2 {
            changed |= accumulate(&mut vars, slots, config) || cumulative(&mut vars, slots);
        }
        if !changed {
            break;
        }
    }
    vars
}

fn conditional_merge(vars: &mut Vec<Variable>) -> bool {
    let mut changed = false;
    while let Some((a, b)) = find_conditional_pair(vars) {
        let presence = vars[a].clone();
        let target = &mut vars[b];
        for (id, value) in target.assignment.iter_mut() {
            if presence.assignment.get(id).map(String::as_str) == Some(ABSENT_FLAG) {
                *value = ABSENT.to_string();
            }
        }
        target.values = sort_labels(target.assignment.values().cloned());
        vars.remove(a);
        changed = true;
    }
    changed
}

fn find_conditional_pair(vars: &[Variable]) -> Option<(usize, usize)> {
    for (a, pres) in vars.iter().enumerate() {
        if pres.kind != VariableKind::Presence {
            continue;
        }
        let dependent = vars.iter().position(|v| {
            matches!(v.kind, VariableKind::ParamValue | VariableKind::OpType)
                && v.slot == pres.slot
                && v.slot_end == pres.slot
                && v.assignment
                    .iter()
                    .all(|(id, val)| (val == NOT_APPLICABLE) == (pres.assignment[id] == ABSENT_FLAG))
        });
        if let Some(b) = dependent {
            return Some((a, b));
        }
    }
    None
}

/// Folds the first eligible same-operation run.
fn accumulate(vars: &mut Vec<Variable>, slots: &AlignedSlots, config: &SimplifyConfig) -> bool {
    let ids: Vec<&String> = slots.per_model.keys().collect();
    let slot_name = |s: usize| -> Option<&str> {
        let names: BTreeSet<&str> = slots
            .per_model
            .values()
            .filter_map(|row| row[s].as_ref().map(|o| o.name.as_str()))
            .collect();
        (names.len() == 1).then(|| *names.iter().next().expect("one"))
    };

    let mut start = 0;
    while start < slots.slot_count {
        let Some(name) = slot_name(start) else {
            start += 1;
            continue;
        };
        let mut end = start;
        while end + 1 < slots.slot_count && slot_name(end + 1) == Some(name) {
            end += 1;
        }
        if end > start {
            for (key, combiner) in &config.combinable {
                if let Some(folded) = fold_run(vars, slots, &ids, (start, end), name, key, *combiner) {
                    let (keep, var) = folded;
                    let first = keep.iter().copied().min().expect("non-empty run");
                    let mut out = Vec::with_capacity(vars.len());
                    for (i, v) in vars.drain(..).enumerate() {
                        if i == first {
                            out.push(var.clone());
                        } else if !keep.contains(&i) {
                            out.push(v);
                        }
                    }
                    *vars = out;
                    dedupe_names(vars);
                    return true;
                }
            }
        }
        start = end + 1;
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn fold_run(
    vars: &[Variable],
    slots: &AlignedSlots,
    ids: &[&String],
    (start, end): (usize, usize),
    name: &str,
    key: &str,
    combiner: Combiner,
) -> Option<(Vec<usize>, Variable)> {
    let present: Vec<&Operation> = slots
        .per_model
        .values()
        .flat_map(|row| row[start..=end].iter().flatten())
        .collect();
    if !present.iter().all(|o| o.parameters.contains_key(key)) {
        return None;
    }
    let touching: Vec<usize> = vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.slot_end >= start && v.slot <= end)
        .map(|(i, _)| i)
        .collect();
    if touching.len() < 2 {
        return None;
    }
    let foldable = touching.iter().all(|&i| {
        let v = &vars[i];
        v.slot >= start
            && v.slot_end <= end
            && (v.kind == VariableKind::Presence
                || (v.kind == VariableKind::ParamValue && v.param_key.as_deref() == Some(key)))
    });
    if !foldable {
        return None;
    }
    let assignment: BTreeMap<String, String> = ids
        .iter()
        .map(|id| {
            let labels: Vec<String> = slots.per_model[*id][start..=end]
                .iter()
                .flatten()
                .map(|o| o.parameters[key].to_string())
                .collect();
            let value = if labels.is_empty() {
                ABSENT.to_string()
            } else {
                combiner.combine(&labels)
            };
            ((*id).clone(), value)
        })
        .collect();
    let values = sort_labels(assignment.values().cloned());
    Some((
        touching,
        Variable {
            name: format!("{name}.{key}"),
            kind: VariableKind::ParamValue,
            slot: start,
            slot_end: end,
            operation: Some(name.to_string()),
            param_key: Some(key.to_string()),
            values,
            assignment,
        },
    ))
}

/// Replaces every variable with a single pipeline stage when the selection
/// is a chain: ordered by number of applied operations, each model's slots
/// are a prefix of the next model's.
fn cumulative(vars: &mut Vec<Variable>, slots: &AlignedSlots) -> bool {
    if vars.iter().any(|v| v.kind == VariableKind::PipelineStage) {
        return false;
    }
    // Compared on op paths, not slot positions: gaps in the alignment do
    // not matter for a chain.
    let paths: Vec<(&String, Vec<&Operation>)> = slots
        .per_model
        .iter()
        .map(|(id, row)| (id, row.iter().flatten().collect()))
        .collect();
    let longest: &Vec<&Operation> = &paths.iter().max_by_key(|(_, p)| p.len()).expect("non-empty").1;
    let mut chain: Vec<(&String, usize)> = Vec::with_capacity(paths.len());
    for (id, path) in &paths {
        if path[..] != longest[..path.len()] {
            return false;
        }
        chain.push((id, path.len()));
    }
    chain.sort_by_key(|(_, n)| *n);
    let mut stage_of_len: BTreeMap<usize, String> = BTreeMap::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    for (_, n) in &chain {
        if stage_of_len.contains_key(n) {
            continue;
        }
        let label = if *n == 0 {
            ROOT_STAGE.to_string()
        } else {
            let op = longest[*n - 1];
            let mut l = op.name.clone();
            if used.contains(&l) {
                l = op.label();
            }
            let mut k = 2;
            while used.contains(&l) {
                l = format!("{}#{k}", op.name);
                k += 1;
            }
            l
        };
        used.insert(label.clone());
        stage_of_len.insert(*n, label);
    }

    let assignment: BTreeMap<String, String> = chain
        .iter()
        .map(|(id, n)| ((*id).clone(), stage_of_len[n].clone()))
        .collect();
    let lo = vars.iter().map(|v| v.slot).min().unwrap_or(0);
    let hi = vars.iter().map(|v| v.slot_end).max().unwrap_or(0);
    *vars = vec![Variable {
        name: "stage".to_string(),
        kind: VariableKind::PipelineStage,
        slot: lo,
        slot_end: hi,
        operation: None,
        param_key: None,
        values: stage_of_len.into_values().collect(),
        assignment,
    }];
    true
}
