use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use crate::store::{ModelStore, Operation};

use super::align::{min_cost_alignment, progressive_lcs, Columns};
use super::cost::{param_label, slot_needs, Cost};
use super::{sort_labels, AlignedSlots, SelectionError, Variable, VariableKind};

pub const PRESENT: &str = "true";
pub const ABSENT_FLAG: &str = "false";
/// Value of a conditional variable for models lacking the slot.
pub const NOT_APPLICABLE: &str = "n/a";

/// Alignment plus the variables inferred from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub slots: AlignedSlots,
    pub variables: Vec<Variable>,
    /// Whether the alignment came from the exhaustive search.
    pub exact: bool,
}

impl Inference {
    pub fn cost(&self) -> Cost {
        self.variables.iter().map(Variable::cost).sum()
    }
}

/// Selection members in store order, validated.
pub(crate) fn ordered_selection<'a, I>(store: &ModelStore, selection: I) -> Result<Vec<String>, SelectionError>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut ids: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for id in selection {
        if !store.contains(id) {
            return Err(SelectionError::UnknownModel(id.clone()));
        }
        if seen.insert(id.clone()) {
            ids.push(id.clone());
        }
    }
    if ids.is_empty() {
        return Err(SelectionError::EmptySelection);
    }
    ids.sort_by_key(|id| store.position(id));
    Ok(ids)
}

/// Aligns the op paths of the selection.
///
/// Models with identical op paths are aligned once; copies share the
/// representative's slots. Small selections use the exhaustive minimum-cost
/// alignment, larger ones fall back to progressive LCS.
pub fn align_selection(store: &ModelStore, ids: &[String]) -> Result<(AlignedSlots, bool), SelectionError> {
    let mut reps: Vec<Vec<Operation>> = Vec::new();
    let mut rep_sigs: Vec<Vec<String>> = Vec::new();
    let mut rep_of: Vec<usize> = Vec::with_capacity(ids.len());
    for id in ids {
        let path = store.op_path(id).map_err(|_| SelectionError::UnknownModel(id.clone()))?;
        let sigs: Vec<String> = path.iter().map(Operation::signature).collect();
        match rep_sigs.iter().position(|s| *s == sigs) {
            Some(r) => rep_of.push(r),
            None => {
                rep_of.push(reps.len());
                reps.push(path);
                rep_sigs.push(sigs);
            }
        }
    }
    let refs: Vec<&[Operation]> = reps.iter().map(Vec::as_slice).collect();
    let (columns, exact) = match min_cost_alignment(&refs) {
        Some(c) => (c, true),
        None => (progressive_lcs(&refs), false),
    };
    Ok((columns_to_slots(ids, &reps, &rep_of, &columns), exact))
}

fn columns_to_slots(ids: &[String], reps: &[Vec<Operation>], rep_of: &[usize], columns: &Columns) -> AlignedSlots {
    let mut per_model = IndexMap::with_capacity(ids.len());
    for (m, id) in ids.iter().enumerate() {
        let r = rep_of[m];
        let row: Vec<Option<Operation>> = columns
            .iter()
            .map(|col| col[r].map(|i| reps[r][i].clone()))
            .collect();
        per_model.insert(id.clone(), row);
    }
    AlignedSlots {
        slot_count: columns.len(),
        per_model,
    }
}

/// Variables for one slot of an alignment.
pub(crate) fn slot_variables(slots: &AlignedSlots, slot: usize) -> Vec<Variable> {
    let ids: Vec<&String> = slots.per_model.keys().collect();
    let col: Vec<Option<&Operation>> = slots.per_model.values().map(|row| row[slot].as_ref()).collect();
    let needs = slot_needs(&col);
    let present_names: BTreeSet<&str> = col.iter().flatten().map(|o| o.name.as_str()).collect();
    let single_name = (present_names.len() == 1).then(|| *present_names.iter().next().expect("one"));
    let step = format!("step{}", slot + 1);
    let mut out = Vec::new();

    if needs.presence {
        let assignment = ids
            .iter()
            .zip(&col)
            .map(|(id, op)| ((*id).clone(), if op.is_some() { PRESENT } else { ABSENT_FLAG }.to_string()))
            .collect();
        out.push(Variable {
            name: single_name.map_or_else(|| format!("{step}.present"), str::to_string),
            kind: VariableKind::Presence,
            slot,
            slot_end: slot,
            operation: single_name.map(str::to_string),
            param_key: None,
            values: vec![ABSENT_FLAG.to_string(), PRESENT.to_string()],
            assignment,
        });
    }
    if needs.op_type {
        let assignment: BTreeMap<String, String> = ids
            .iter()
            .zip(&col)
            .map(|(id, op)| ((*id).clone(), op.map_or(NOT_APPLICABLE.to_string(), |o| o.signature())))
            .collect();
        out.push(Variable {
            name: step.clone(),
            kind: VariableKind::OpType,
            slot,
            slot_end: slot,
            operation: None,
            param_key: None,
            values: sort_labels(assignment.values().cloned()),
            assignment,
        });
    }
    for key in &needs.param_keys {
        let op_name = single_name.expect("param variables need one operation name");
        let assignment: BTreeMap<String, String> = ids
            .iter()
            .zip(&col)
            .map(|(id, op)| ((*id).clone(), op.map_or(NOT_APPLICABLE.to_string(), |o| param_label(o, key))))
            .collect();
        out.push(Variable {
            name: format!("{op_name}.{key}"),
            kind: VariableKind::ParamValue,
            slot,
            slot_end: slot,
            operation: Some(op_name.to_string()),
            param_key: Some(key.clone()),
            values: sort_labels(assignment.values().cloned()),
            assignment,
        });
    }
    out
}

/// Names must be unique within a variable set; clashes get a slot suffix.
pub(crate) fn dedupe_names(vars: &mut [Variable]) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for v in vars.iter() {
        *counts.entry(v.name.clone()).or_default() += 1;
    }
    for v in vars.iter_mut() {
        if counts[&v.name] > 1 {
            v.name = format!("{}@{}", v.name, v.slot + 1);
        }
    }
}

pub fn infer(store: &ModelStore, selection: &BTreeSet<String>) -> Result<Inference, SelectionError> {
    let ids = ordered_selection(store, selection)?;
    let (slots, exact) = align_selection(store, &ids)?;
    let mut variables: Vec<Variable> = (0..slots.slot_count).flat_map(|s| slot_variables(&slots, s)).collect();
    dedupe_names(&mut variables);
    Ok(Inference {
        slots,
        variables,
        exact,
    })
}

/// Minimum-cost set of variables explaining how the selected models differ.
pub fn infer_variables(store: &ModelStore, selection: &BTreeSet<String>) -> Result<Vec<Variable>, SelectionError> {
    Ok(infer(store, selection)?.variables)
}
