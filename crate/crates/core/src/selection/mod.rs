//! Selection Details: explaining how a set of selected models differ.
//!
//! The op paths of the selection are aligned into slots. Each slot yields the
//! variables needed to tell its models apart (presence of an operation, its
//! type, or a parameter value), the set is simplified, and if at most two
//! variables remain they become the x-axis and color of a grouped bar chart.
//! Otherwise the caller gets refinement options: sub-selections that can be
//! charted.

mod align;
mod chart;
mod cost;
mod infer;
mod simplify;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Operation;

pub use align::{is_valid, min_cost_alignment, progressive_lcs, Columns, EXACT_BUDGET};
pub use chart::{build_comparison, Bar, ChartSpec, ComparisonResult, RefinementGroup};
pub use cost::{
    min_key_cover, slot_cost, slot_needs, Cost, SlotNeeds, OP_TYPE_WEIGHT, PARAM_WEIGHT, PIPELINE_WEIGHT,
    PRESENCE_WEIGHT, UNSET,
};
pub use infer::{align_selection, infer, infer_variables, Inference, NOT_APPLICABLE};
pub use simplify::{simplify_variables, Combiner, SimplifyConfig, ABSENT, ROOT_STAGE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
    #[error("UnknownMetric: {0}")]
    UnknownMetric(String),
    #[error("EmptySelection: select at least one model")]
    EmptySelection,
}

impl SelectionError {
    pub fn code(&self) -> &'static str {
        match self {
            SelectionError::UnknownModel(_) => "UnknownModel",
            SelectionError::UnknownMetric(_) => "UnknownMetric",
            SelectionError::EmptySelection => "EmptySelection",
        }
    }
}

/// Operations of every selected model laid out on shared slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSlots {
    pub slot_count: usize,
    pub per_model: IndexMap<String, Vec<Option<Operation>>>,
}

impl AlignedSlots {
    /// Each model's non-empty cells, in slot order.
    pub fn path_of(&self, id: &str) -> Option<Vec<&Operation>> {
        self.per_model.get(id).map(|row| row.iter().flatten().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    ParamValue,
    Presence,
    OpType,
    PipelineStage,
}

impl VariableKind {
    pub fn weight(self) -> u32 {
        match self {
            VariableKind::ParamValue => PARAM_WEIGHT,
            VariableKind::Presence => PRESENCE_WEIGHT,
            VariableKind::OpType => OP_TYPE_WEIGHT,
            VariableKind::PipelineStage => PIPELINE_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
    /// First slot covered; `slot_end` is inclusive.
    pub slot: usize,
    pub slot_end: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_key: Option<String>,
    pub values: Vec<String>,
    pub assignment: BTreeMap<String, String>,
}

impl Variable {
    pub fn cost(&self) -> Cost {
        Cost::of(self.kind.weight())
    }

    /// Restricts to a subset of models; `None` if the result is constant.
    pub fn restrict(&self, ids: &[String]) -> Option<Variable> {
        let assignment: BTreeMap<String, String> = ids
            .iter()
            .filter_map(|id| self.assignment.get(id).map(|v| (id.clone(), v.clone())))
            .collect();
        let values: Vec<String> = self
            .values
            .iter()
            .filter(|v| assignment.values().any(|a| a == *v))
            .cloned()
            .collect();
        (values.len() >= 2).then(|| Variable {
            values,
            assignment,
            ..self.clone()
        })
    }
}

/// Orders value labels: placeholder labels first, then numbers ascending,
/// then everything else lexicographically. Duplicates are removed.
pub(crate) fn sort_labels(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let rank = |l: &str| match l {
        ABSENT => 0,
        infer::NOT_APPLICABLE => 1,
        UNSET => 2,
        _ => 3,
    };
    let mut out: Vec<String> = labels.into_iter().collect();
    out.sort_by(|a, b| {
        rank(a).cmp(&rank(b)).then_with(|| match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => x.total_cmp(&y),
            (Ok(_), Err(_)) => std::cmp::Ordering::Less,
            (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
            _ => a.cmp(b),
        })
    });
    out.dedup();
    out
}
