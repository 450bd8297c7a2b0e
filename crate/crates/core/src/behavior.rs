//! Instance-level output comparison for the Behaviors tab.
//!
//! Models are evaluated per instance with a builtin comparison metric, then
//! rows are formed per instance or per group, optionally relative to a base
//! model.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::store::ModelStore;

/// Smoothing added to every probability before the KL divergence.
pub const KL_EPSILON: f64 = 1e-10;
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("MissingOutput: model {model} has no output for instance {instance}")]
    MissingOutput { model: String, instance: String },
    #[error("MissingField: instance {instance} lacks {field} needed by the metric")]
    MissingField { instance: String, field: &'static str },
    #[error("BaseRequired: metric {0} compares against a base model")]
    BaseRequired(String),
    #[error("InvalidOutput: {0}")]
    InvalidOutput(String),
    #[error("MismatchedInstanceSets: model {0} was evaluated on different instances")]
    MismatchedInstanceSets(String),
    #[error("InvalidRelativeMode: {0}")]
    InvalidRelativeMode(String),
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
    #[error("EmptySelection: select at least one model")]
    EmptySelection,
}

impl BehaviorError {
    pub fn code(&self) -> &'static str {
        match self {
            BehaviorError::MissingOutput { .. } => "MissingOutput",
            BehaviorError::MissingField { .. } => "MissingField",
            BehaviorError::BaseRequired(_) => "BaseRequired",
            BehaviorError::InvalidOutput(_) => "InvalidOutput",
            BehaviorError::MismatchedInstanceSets(_) => "MismatchedInstanceSets",
            BehaviorError::InvalidRelativeMode(_) => "InvalidRelativeMode",
            BehaviorError::UnknownModel(_) => "UnknownModel",
            BehaviorError::EmptySelection => "EmptySelection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub truth: String,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub payload_ref: Option<String>,
}

impl InstanceRecord {
    /// Group used for class-level rows: the explicit group, else the truth.
    pub fn group_key(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.truth)
    }
}

/// `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<InstanceRecord>,
    #[serde(default)]
    pub classes: Vec<String>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        let mut seen = BTreeSet::new();
        for i in &self.instances {
            if !seen.insert(i.id.as_str()) {
                return Err(BehaviorError::InvalidOutput(format!("duplicate instance id {}", i.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// `outputs.json` for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub model: String,
    pub instances: Vec<OutputEntry>,
}

impl ModelOutputs {
    /// Checks the output invariants. `classes` names the probability
    /// entries and is needed to compare labels with the argmax.
    pub fn validate(&self, classes: &[String]) -> Result<(), BehaviorError> {
        let bad = |id: &str, why: String| BehaviorError::InvalidOutput(format!("{} / {id}: {why}", self.model));
        for o in &self.instances {
            if o.label.is_none() && o.probs.is_none() && o.text.is_none() {
                return Err(bad(&o.id, "no label, probs or text".into()));
            }
            if let Some(p) = &o.probs {
                if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(bad(&o.id, "negative or non-finite probability".into()));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                    return Err(bad(&o.id, format!("probabilities sum to {sum}")));
                }
                if let (Some(label), false) = (&o.label, classes.is_empty()) {
                    let arg = argmax(p);
                    if classes.get(arg) != Some(label) {
                        return Err(bad(&o.id, format!("label {label} is not the argmax")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn index(&self) -> HashMap<&str, &OutputEntry> {
        self.instances.iter().map(|o| (o.id.as_str(), o)).collect()
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMetric {
    Correctness,
    Confidence,
    Top1Change,
    KlDivergence,
    TextF1,
    TextChange,
}

impl ComparisonMetric {
    pub fn requires_base(self) -> bool {
        matches!(
            self,
            ComparisonMetric::Top1Change | ComparisonMetric::KlDivergence | ComparisonMetric::TextChange
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ComparisonMetric::Correctness => "correctness",
            ComparisonMetric::Confidence => "confidence",
            ComparisonMetric::Top1Change => "top1_change",
            ComparisonMetric::KlDivergence => "kl_divergence",
            ComparisonMetric::TextF1 => "text_f1",
            ComparisonMetric::TextChange => "text_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeMode {
    Absolute,
    Difference,
    PctErrorChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Instance,
    Group,
}

/// Model nearest the root; ties go to the smallest id.
pub fn default_base(store: &ModelStore, selection: &BTreeSet<String>) -> Result<String, BehaviorError> {
    let mut best: Option<(usize, &String)> = None;
    for id in selection {
        let d = store
            .depth(id)
            .map_err(|_| BehaviorError::UnknownModel(id.clone()))?;
        if best.is_none_or(|(bd, bid)| (d, id) < (bd, bid)) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id.clone()).ok_or(BehaviorError::EmptySelection)
}

fn label_of(o: &OutputEntry, classes: &[String]) -> Option<String> {
    o.label
        .clone()
        .or_else(|| o.probs.as_ref().and_then(|p| classes.get(argmax(p)).cloned()))
}

/// KL(base ‖ model) after ε-smoothing and renormalising both sides.
pub fn kl_divergence(base: &[f64], model: &[f64]) -> f64 {
    let smooth = |p: &[f64]| -> Vec<f64> {
        let total: f64 = p.iter().map(|v| v + KL_EPSILON).sum();
        p.iter().map(|v| (v + KL_EPSILON) / total).collect()
    };
    let (b, m) = (smooth(base), smooth(model));
    b.iter().zip(&m).map(|(pb, pm)| pb * (pb / pm).ln()).sum()
}

fn normalize_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Token-overlap F1 between a prediction and a reference.
pub fn text_f1(prediction: &str, truth: &str) -> f64 {
    let p = normalize_tokens(prediction);
    let t = normalize_tokens(truth);
    if p.is_empty() || t.is_empty() {
        return if p.is_empty() && t.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for tok in &t {
        *counts.entry(tok).or_default() += 1;
    }
    let mut common = 0i64;
    for tok in &p {
        if let Some(c) = counts.get_mut(tok.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / t.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Per-instance metric values, in dataset order.
pub fn eval_metric(
    metric: ComparisonMetric,
    outputs: &ModelOutputs,
    base: Option<&ModelOutputs>,
    dataset: &Dataset,
) -> Result<IndexMap<String, f64>, BehaviorError> {
    if metric.requires_base() && base.is_none() {
        return Err(BehaviorError::BaseRequired(metric.name().to_string()));
    }
    let model_idx = outputs.index();
    let base_idx = base.map(ModelOutputs::index);
    let classes = &dataset.classes;
    let missing = |model: &str, instance: &str| BehaviorError::MissingOutput {
        model: model.to_string(),
        instance: instance.to_string(),
    };
    let field = |instance: &str, field: &'static str| BehaviorError::MissingField {
        instance: instance.to_string(),
        field,
    };

    let mut out = IndexMap::with_capacity(dataset.instances.len());
    for inst in &dataset.instances {
        let id = inst.id.as_str();
        let o = *model_idx.get(id).ok_or_else(|| missing(&outputs.model, id))?;
        let b = match (&base_idx, base) {
            (Some(idx), Some(bo)) => Some(*idx.get(id).ok_or_else(|| missing(&bo.model, id))?),
            _ => None,
        };
        let value = match metric {
            ComparisonMetric::Correctness => {
                let label = label_of(o, classes).ok_or_else(|| field(id, "label"))?;
                f64::from(u8::from(label == inst.truth))
            }
            ComparisonMetric::Confidence => {
                let p = o.probs.as_ref().ok_or_else(|| field(id, "probs"))?;
                p.iter().copied().fold(0.0, f64::max)
            }
            ComparisonMetric::Top1Change => {
                let b = b.expect("base checked");
                let lm = label_of(o, classes).ok_or_else(|| field(id, "label"))?;
                let lb = label_of(b, classes).ok_or_else(|| field(id, "label"))?;
                f64::from(u8::from(lm != lb))
            }
            ComparisonMetric::KlDivergence => {
                let b = b.expect("base checked");
                let pm = o.probs.as_ref().ok_or_else(|| field(id, "probs"))?;
                let pb = b.probs.as_ref().ok_or_else(|| field(id, "probs"))?;
                if pm.len() != pb.len() {
                    return Err(BehaviorError::InvalidOutput(format!(
                        "{id}: probability vectors differ in length"
                    )));
                }
                kl_divergence(pb, pm)
            }
            ComparisonMetric::TextF1 => {
                let t = o.text.as_ref().ok_or_else(|| field(id, "text"))?;
                text_f1(t, &inst.truth)
            }
            ComparisonMetric::TextChange => {
                let b = b.expect("base checked");
                let tm = o.text.as_ref().ok_or_else(|| field(id, "text"))?;
                let tb = b.text.as_ref().ok_or_else(|| field(id, "text"))?;
                f64::from(u8::from(tm != tb))
            }
        };
        out.insert(inst.id.clone(), value);
    }
    Ok(out)
}

/// Evaluates several models against one base; models are independent.
pub fn eval_models(
    metric: ComparisonMetric,
    models: &[&ModelOutputs],
    base: Option<&ModelOutputs>,
    dataset: &Dataset,
    exec: Exec,
) -> Result<IndexMap<String, IndexMap<String, f64>>, BehaviorError> {
    let values = exec.try_map(models, |m| eval_metric(metric, m, base, dataset))?;
    Ok(models.iter().map(|m| m.model.clone()).zip(values).collect())
}

/// Relative value of a row cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Relative {
    Value(f64),
    /// Error change against a base with zero errors.
    Undefined { new_errors: f64 },
}

impl Relative {
    pub fn value(&self) -> Option<f64> {
        match self {
            Relative::Value(v) => Some(*v),
            Relative::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCell {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative: Option<Relative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub key: String,
    pub per_model: IndexMap<String, RowCell>,
    pub count: usize,
}

/// Builds rows from per-model values. `pct_error_change` treats the values
/// as correctness (1 = right) and compares error counts with the base.
pub fn aggregate_rows(
    values: &IndexMap<String, IndexMap<String, f64>>,
    dataset: &Dataset,
    group_by: GroupBy,
    base: &str,
    mode: RelativeMode,
) -> Result<Vec<BehaviorRow>, BehaviorError> {
    let expected: BTreeSet<&str> = dataset.instances.iter().map(|i| i.id.as_str()).collect();
    for (model, v) in values {
        if v.len() != expected.len() || !v.keys().all(|k| expected.contains(k.as_str())) {
            return Err(BehaviorError::MismatchedInstanceSets(model.clone()));
        }
    }
    let base_values = values
        .get(base)
        .ok_or_else(|| BehaviorError::UnknownModel(base.to_string()))?;

    let mut groups: IndexMap<&str, Vec<&str>> = IndexMap::new();
    for inst in &dataset.instances {
        let key = match group_by {
            GroupBy::Instance => inst.id.as_str(),
            GroupBy::Group => inst.group_key(),
        };
        groups.entry(key).or_default().push(inst.id.as_str());
    }

    let rows = groups
        .into_iter()
        .map(|(key, members)| {
            let n = members.len() as f64;
            let mean = |v: &IndexMap<String, f64>| members.iter().map(|m| v[*m]).sum::<f64>() / n;
            let errors = |v: &IndexMap<String, f64>| members.iter().map(|m| 1.0 - v[*m]).sum::<f64>();
            let base_mean = mean(base_values);
            let base_errors = errors(base_values);
            let per_model = values
                .iter()
                .map(|(model, v)| {
                    let value = mean(v);
                    let relative = match mode {
                        RelativeMode::Absolute => None,
                        _ if model == base => Some(Relative::Value(0.0)),
                        RelativeMode::Difference => Some(Relative::Value(value - base_mean)),
                        RelativeMode::PctErrorChange => {
                            let e = errors(v);
                            Some(if base_errors == 0.0 {
                                Relative::Undefined { new_errors: e }
                            } else {
                                Relative::Value(100.0 * (e - base_errors) / base_errors)
                            })
                        }
                    };
                    (model.clone(), RowCell { value, relative })
                })
                .collect();
            BehaviorRow {
                key: key.to_string(),
                per_model,
                count: members.len(),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortField {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortKey {
    pub model: String,
    pub field: SortField,
    pub direction: Direction,
}

/// Stable sort on one model column. Cells without a defined value sort
/// last in either direction.
pub fn sort_rows(mut rows: Vec<BehaviorRow>, key: &SortKey) -> Result<Vec<BehaviorRow>, BehaviorError> {
    if rows.iter().any(|r| !r.per_model.contains_key(&key.model)) {
        return Err(BehaviorError::UnknownModel(key.model.clone()));
    }
    let sort_value = |r: &BehaviorRow| -> Option<f64> {
        let cell = &r.per_model[&key.model];
        match key.field {
            SortField::Absolute => Some(cell.value),
            SortField::Relative => cell.relative.and_then(|rel| rel.value()),
        }
    };
    rows.sort_by(|a, b| match (sort_value(a), sort_value(b)) {
        (Some(x), Some(y)) => match key.direction {
            Direction::Asc => x.total_cmp(&y),
            Direction::Desc => y.total_cmp(&x),
        },
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(groups: &[(&str, &str, &str)]) -> Dataset {
        Dataset {
            instances: groups
                .iter()
                .map(|(id, truth, group)| InstanceRecord {
                    id: id.to_string(),
                    truth: truth.to_string(),
                    group: Some(group.to_string()),
                    payload_ref: None,
                })
                .collect(),
            classes: vec!["a".into(), "b".into()],
        }
    }

    fn outputs(model: &str, rows: &[(&str, &str, [f64; 2])]) -> ModelOutputs {
        ModelOutputs {
            model: model.into(),
            instances: rows
                .iter()
                .map(|(id, label, p)| OutputEntry {
                    id: id.to_string(),
                    label: Some(label.to_string()),
                    probs: Some(p.to_vec()),
                    text: None,
                })
                .collect(),
        }
    }

    #[test]
    fn kl_examples() {
        assert!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).abs() <= 1e-9);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - 2f64.ln()).abs() <= 1e-6);
    }

    #[test]
    fn text_f1_examples() {
        assert!((text_f1("Super Bowl LII", "Super Bowl 50") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(text_f1("", ""), 1.0);
        assert_eq!(text_f1("x", ""), 0.0);
        assert_eq!(text_f1("Denver Broncos!", "denver broncos"), 1.0);
        assert_eq!(text_f1("cat", "dog"), 0.0);
    }

    #[test]
    fn metrics_and_errors() {
        let ds = dataset(&[("i1", "a", "g"), ("i2", "b", "g")]);
        let base = outputs("base", &[("i1", "a", [0.9, 0.1]), ("i2", "b", [0.2, 0.8])]);
        let m = outputs("m", &[("i1", "b", [0.4, 0.6]), ("i2", "b", [0.1, 0.9])]);
        base.validate(&ds.classes).unwrap();

        let c = eval_metric(ComparisonMetric::Correctness, &m, None, &ds).unwrap();
        assert_eq!(c.values().copied().collect::<Vec<_>>(), [0.0, 1.0]);
        let conf = eval_metric(ComparisonMetric::Confidence, &m, None, &ds).unwrap();
        assert_eq!(conf["i2"], 0.9);
        let t = eval_metric(ComparisonMetric::Top1Change, &m, Some(&base), &ds).unwrap();
        assert_eq!(t.values().copied().collect::<Vec<_>>(), [1.0, 0.0]);
        assert_eq!(
            eval_metric(ComparisonMetric::KlDivergence, &m, None, &ds).unwrap_err(),
            BehaviorError::BaseRequired("kl_divergence".into())
        );
        let short = outputs("short", &[("i1", "a", [1.0, 0.0])]);
        assert!(matches!(
            eval_metric(ComparisonMetric::Correctness, &short, None, &ds),
            Err(BehaviorError::MissingOutput { ref instance, .. }) if instance == "i2"
        ));
    }

    #[test]
    fn validation_catches_bad_outputs() {
        let classes = vec!["a".to_string(), "b".to_string()];
        assert!(outputs("m", &[("i", "a", [0.6, 0.6])]).validate(&classes).is_err());
        assert!(outputs("m", &[("i", "b", [0.6, 0.4])]).validate(&classes).is_err());
        let empty = ModelOutputs {
            model: "m".into(),
            instances: vec![OutputEntry { id: "i".into(), label: None, probs: None, text: None }],
        };
        assert!(empty.validate(&classes).is_err());
    }

    #[test]
    fn default_base_prefers_shallow_then_id() {
        let s = crate::store::load_store(
            &serde_json::json!({
                "schema_version": 1, "metrics": [],
                "models": [
                    {"id": "r", "parent": null, "operation": null},
                    {"id": "b", "parent": "r", "operation": {"name": "x"}},
                    {"id": "a", "parent": "r", "operation": {"name": "y"}},
                    {"id": "c", "parent": "a", "operation": {"name": "z"}}
                ]
            })
            .to_string(),
        )
        .unwrap();
        let sel = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(default_base(&s, &sel(&["r", "c"])).unwrap(), "r");
        assert_eq!(default_base(&s, &sel(&["c", "b"])).unwrap(), "b");
        assert_eq!(default_base(&s, &sel(&["b", "a"])).unwrap(), "a");
    }

    fn correctness(pattern: &[f64]) -> IndexMap<String, f64> {
        pattern.iter().enumerate().map(|(i, v)| (format!("i{i}"), *v)).collect()
    }

    #[test]
    fn pct_error_change() {
        let ds = Dataset {
            instances: (0..10)
                .map(|i| InstanceRecord { id: format!("i{i}"), truth: "a".into(), group: Some("g".into()), payload_ref: None })
                .collect(),
            classes: vec![],
        };
        let mut values = IndexMap::new();
        values.insert("base".to_string(), correctness(&[0., 0., 1., 1., 1., 1., 1., 1., 1., 1.]));
        values.insert("m".to_string(), correctness(&[0., 0., 0., 0., 0., 1., 1., 1., 1., 1.]));
        let rows = aggregate_rows(&values, &ds, GroupBy::Group, "base", RelativeMode::PctErrorChange).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].per_model["m"].relative, Some(Relative::Value(150.0)));
        assert_eq!(rows[0].per_model["base"].relative, Some(Relative::Value(0.0)));

        let rows = aggregate_rows(&values, &ds, GroupBy::Instance, "base", RelativeMode::PctErrorChange).unwrap();
        assert_eq!(rows[2].per_model["m"].relative, Some(Relative::Undefined { new_errors: 1.0 }));
    }

    #[test]
    fn group_means_recompose() {
        let ds = dataset(&[("i0", "a", "x"), ("i1", "a", "x"), ("i2", "a", "x"), ("i3", "b", "y")]);
        let mut values = IndexMap::new();
        values.insert("base".to_string(), correctness(&[1.0, 0.0, 1.0, 0.5]));
        let rows = aggregate_rows(&values, &ds, GroupBy::Group, "base", RelativeMode::Difference).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].key.as_str(), rows[0].count), ("x", 3));
        assert!((rows[0].per_model["base"].value - 2.0 / 3.0).abs() < 1e-12);
        let overall: f64 = rows.iter().map(|r| r.per_model["base"].value * r.count as f64).sum::<f64>() / 4.0;
        assert!((overall - 2.5 / 4.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.per_model["base"].relative == Some(Relative::Value(0.0))));

        let mut bad = values.clone();
        bad.insert("m".to_string(), correctness(&[1.0, 1.0]));
        assert_eq!(
            aggregate_rows(&bad, &ds, GroupBy::Group, "base", RelativeMode::Absolute).unwrap_err(),
            BehaviorError::MismatchedInstanceSets("m".into())
        );
    }

    fn row(key: &str, value: f64, rel: Option<Relative>) -> BehaviorRow {
        BehaviorRow {
            key: key.into(),
            per_model: [("m".to_string(), RowCell { value, relative: rel })].into_iter().collect(),
            count: 1,
        }
    }

    #[test]
    fn sorting() {
        let rows = vec![
            row("u", 0.0, Some(Relative::Undefined { new_errors: 3.0 })),
            row("neg", 0.0, Some(Relative::Value(-10.0))),
            row("pos", 0.0, Some(Relative::Value(150.0))),
        ];
        let key = SortKey { model: "m".into(), field: SortField::Relative, direction: Direction::Desc };
        let sorted = sort_rows(rows.clone(), &key).unwrap();
        let keys: Vec<&str> = sorted.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, ["pos", "neg", "u"]);
        let asc = sort_rows(rows, &SortKey { direction: Direction::Asc, ..key.clone() }).unwrap();
        let keys: Vec<&str> = asc.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, ["neg", "pos", "u"]);

        let stable = vec![row("a", 1.0, None), row("b", 1.0, None), row("c", 2.0, None)];
        let abs = SortKey { model: "m".into(), field: SortField::Absolute, direction: Direction::Asc };
        let out = sort_rows(stable.clone(), &abs).unwrap();
        assert_eq!(out, stable);
        assert!(sort_rows(stable, &SortKey { model: "zz".into(), ..abs }).is_err());
    }
}
