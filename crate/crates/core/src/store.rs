//! Experiment forest: ingestion, validation and provenance queries.
//!
//! A store is built once from an `experiments.json` document and is
//! immutable afterwards. Iteration order always follows the order in which
//! models appear in the document.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("Parse: {0}")]
    Parse(String),
    #[error("UnsupportedSchema: version {0} (supported: {SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("DuplicateId: {0}")]
    DuplicateId(String),
    #[error("DuplicateMetric: {0}")]
    DuplicateMetric(String),
    #[error("MultipleDefaultEncodings: more than one metric defaults to {0}")]
    MultipleDefaultEncodings(String),
    #[error("UnknownParent: {0}")]
    UnknownParent(String),
    #[error("CycleDetected: {0}")]
    CycleDetected(String),
    #[error("UndeclaredMetric: model {model} carries undeclared metric {metric}")]
    UndeclaredMetric { model: String, metric: String },
    #[error("NonFiniteMetric: model {model}, metric {metric}")]
    NonFiniteMetric { model: String, metric: String },
    #[error("RootWithOperation: {0}")]
    RootWithOperation(String),
    #[error("MissingOperation: {0} has a parent but no operation")]
    MissingOperation(String),
    #[error("EmptyOperationName: {0}")]
    EmptyOperationName(String),
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
    #[error("UnknownMetric: {0}")]
    UnknownMetric(String),
}

impl StoreError {
    /// Stable machine-readable code, used in CLI and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Parse(_) => "Parse",
            StoreError::UnsupportedSchema(_) => "UnsupportedSchema",
            StoreError::DuplicateId(_) => "DuplicateId",
            StoreError::DuplicateMetric(_) => "DuplicateMetric",
            StoreError::MultipleDefaultEncodings(_) => "MultipleDefaultEncodings",
            StoreError::UnknownParent(_) => "UnknownParent",
            StoreError::CycleDetected(_) => "CycleDetected",
            StoreError::UndeclaredMetric { .. } => "UndeclaredMetric",
            StoreError::NonFiniteMetric { .. } => "NonFiniteMetric",
            StoreError::RootWithOperation(_) => "RootWithOperation",
            StoreError::MissingOperation(_) => "MissingOperation",
            StoreError::EmptyOperationName(_) => "EmptyOperationName",
            StoreError::UnknownModel(_) => "UnknownModel",
            StoreError::UnknownMetric(_) => "UnknownMetric",
        }
    }
}

/// Parameter value of an operation.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Bool(b) => serializer.serialize_bool(*b),
            Scalar::Number(v) => match as_integer(*v) {
                Some(i) => serializer.serialize_i64(i),
                None => serializer.serialize_f64(*v),
            },
            Scalar::Text(s) => serializer.serialize_str(s),
        }
    }
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Number(v) => f.write_str(&format_number(*v)),
            Scalar::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Text(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

fn as_integer(v: f64) -> Option<i64> {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        Some(v as i64)
    } else {
        None
    }
}

/// Shortest round-trippable rendering; integral values print without a
/// fractional part.
pub fn format_number(v: f64) -> String {
    match as_integer(v) {
        Some(i) => i.to_string(),
        None => format!("{v}"),
    }
}

/// A compression step applied to a parent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub name: String,
    #[serde(default)]
    pub parameters: IndexMap<String, Scalar>,
}

impl Operation {
    pub fn new(name: impl Into<String>) -> Self {
        Operation {
            name: name.into(),
            parameters: IndexMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Scalar>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    /// Name plus canonical JSON of the parameters with sorted keys. Two
    /// operations are considered the same iff their signatures match.
    pub fn signature(&self) -> String {
        let sorted: BTreeMap<&str, &Scalar> = self
            .parameters
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .collect();
        let params = serde_json::to_string(&sorted).expect("scalars always serialize");
        format!("{}{}", self.name, params)
    }

    /// Human-readable form, e.g. `prune(sparsity=0.5)`.
    pub fn label(&self) -> String {
        if self.parameters.is_empty() {
            return self.name.clone();
        }
        let args: Vec<String> = self
            .parameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.name, args.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Color,
    Size,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub objective: Objective,
    #[serde(default)]
    pub default_encoding: Option<Encoding>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelNode {
    pub id: String,
    #[serde(rename = "parent")]
    pub parent_id: Option<String>,
    pub operation: Option<Operation>,
    pub metrics: IndexMap<String, f64>,
    pub tags: Vec<String>,
}

/// One entry of the `models` array in `experiments.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub operation: Option<Operation>,
    #[serde(default)]
    pub metrics: IndexMap<String, f64>,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// The `experiments.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDocument {
    pub schema_version: u32,
    pub metrics: Vec<MetricSpec>,
    pub models: Vec<ModelRecord>,
}

impl ExperimentDocument {
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| StoreError::Parse(e.to_string()))?;
        // Check the version before the full schema so that future documents
        // report a version error rather than a field error.
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(StoreError::UnsupportedSchema(v as u32)),
            None => return Err(StoreError::Parse("missing schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| StoreError::Parse(e.to_string()))
    }
}

/// Validated experiment forest.
#[derive(Debug, Clone)]
pub struct ModelStore {
    metrics: Vec<MetricSpec>,
    nodes: IndexMap<String, ModelNode>,
    roots: Vec<String>,
    children: HashMap<String, Vec<String>>,
    depth: HashMap<String, usize>,
}

pub fn load_store(text: &str) -> Result<ModelStore, StoreError> {
    ModelStore::from_document(ExperimentDocument::parse(text)?)
}

impl ModelStore {
    pub fn from_document(doc: ExperimentDocument) -> Result<Self, StoreError> {
        let mut seen_metrics = BTreeSet::new();
        let (mut color, mut size) = (0, 0);
        for m in &doc.metrics {
            if !seen_metrics.insert(m.name.clone()) {
                return Err(StoreError::DuplicateMetric(m.name.clone()));
            }
            match m.default_encoding {
                Some(Encoding::Color) => color += 1,
                Some(Encoding::Size) => size += 1,
                _ => {}
            }
        }
        if color > 1 {
            return Err(StoreError::MultipleDefaultEncodings("color".into()));
        }
        if size > 1 {
            return Err(StoreError::MultipleDefaultEncodings("size".into()));
        }

        let mut nodes: IndexMap<String, ModelNode> = IndexMap::with_capacity(doc.models.len());
        for rec in doc.models {
            if nodes.contains_key(&rec.id) {
                return Err(StoreError::DuplicateId(rec.id));
            }
            for (metric, value) in &rec.metrics {
                if !seen_metrics.contains(metric) {
                    return Err(StoreError::UndeclaredMetric {
                        model: rec.id.clone(),
                        metric: metric.clone(),
                    });
                }
                if !value.is_finite() {
                    return Err(StoreError::NonFiniteMetric {
                        model: rec.id.clone(),
                        metric: metric.clone(),
                    });
                }
            }
            match (&rec.parent, &rec.operation) {
                (None, Some(_)) => return Err(StoreError::RootWithOperation(rec.id)),
                (Some(_), None) => return Err(StoreError::MissingOperation(rec.id)),
                (_, Some(op)) if op.name.is_empty() => {
                    return Err(StoreError::EmptyOperationName(rec.id))
                }
                _ => {}
            }
            nodes.insert(
                rec.id.clone(),
                ModelNode {
                    id: rec.id,
                    parent_id: rec.parent,
                    operation: rec.operation,
                    metrics: rec.metrics,
                    tags: rec.tags,
                },
            );
        }

        let mut children: HashMap<String, Vec<String>> = HashMap::new();
        let mut roots = Vec::new();
        for node in nodes.values() {
            match &node.parent_id {
                None => roots.push(node.id.clone()),
                Some(p) => {
                    if !nodes.contains_key(p) {
                        return Err(StoreError::UnknownParent(node.id.clone()));
                    }
                    children.entry(p.clone()).or_default().push(node.id.clone());
                }
            }
        }

        // Every node reachable from a root gets a depth; the rest sit on a cycle
        // (or hang below one).
        let mut depth = HashMap::with_capacity(nodes.len());
        let mut queue: VecDeque<&String> = roots.iter().collect();
        for r in &roots {
            depth.insert(r.clone(), 0usize);
        }
        while let Some(id) = queue.pop_front() {
            let d = depth[id];
            if let Some(kids) = children.get(id) {
                for k in kids {
                    depth.insert(k.clone(), d + 1);
                    queue.push_back(k);
                }
            }
        }
        if depth.len() != nodes.len() {
            let offender = nodes
                .keys()
                .find(|id| !depth.contains_key(*id) && on_cycle(&nodes, id))
                .or_else(|| nodes.keys().find(|id| !depth.contains_key(*id)))
                .expect("some node is unreachable");
            return Err(StoreError::CycleDetected(offender.clone()));
        }

        Ok(ModelStore {
            metrics: doc.metrics,
            nodes,
            roots,
            children,
            depth,
        })
    }

    pub fn to_document(&self) -> ExperimentDocument {
        ExperimentDocument {
            schema_version: SCHEMA_VERSION,
            metrics: self.metrics.clone(),
            models: self
                .nodes
                .values()
                .map(|n| ModelRecord {
                    id: n.id.clone(),
                    parent: n.parent_id.clone(),
                    operation: n.operation.clone(),
                    metrics: n.metrics.clone(),
                    tags: n.tags.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }

    pub fn metrics(&self) -> &[MetricSpec] {
        &self.metrics
    }

    pub fn metric(&self, name: &str) -> Result<&MetricSpec, StoreError> {
        self.metrics
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| StoreError::UnknownMetric(name.to_string()))
    }

    pub fn default_metric(&self, encoding: Encoding) -> Option<&MetricSpec> {
        self.metrics
            .iter()
            .find(|m| m.default_encoding == Some(encoding))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in document order.
    pub fn nodes(&self) -> impl Iterator<Item = &ModelNode> {
        self.nodes.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Result<&ModelNode, StoreError> {
        self.nodes
            .get(id)
            .ok_or_else(|| StoreError::UnknownModel(id.to_string()))
    }

    /// Document position of a model, used as a stable ordering key.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    pub fn children(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn depth(&self, id: &str) -> Result<usize, StoreError> {
        self.depth
            .get(id)
            .copied()
            .ok_or_else(|| StoreError::UnknownModel(id.to_string()))
    }

    pub fn metric_value(&self, id: &str, metric: &str) -> Option<f64> {
        self.nodes.get(id).and_then(|n| n.metrics.get(metric).copied())
    }

    /// Operations on the root→`id` path, root end first.
    pub fn op_path(&self, id: &str) -> Result<Vec<Operation>, StoreError> {
        let mut node = self.node(id)?;
        let mut ops = Vec::with_capacity(self.depth[id]);
        while let (Some(parent), Some(op)) = (&node.parent_id, &node.operation) {
            ops.push(op.clone());
            node = &self.nodes[parent];
        }
        ops.reverse();
        Ok(ops)
    }

    pub fn select_descendants(
        &self,
        id: &str,
        include_self: bool,
    ) -> Result<BTreeSet<String>, StoreError> {
        self.node(id)?;
        let mut out = BTreeSet::new();
        if include_self {
            out.insert(id.to_string());
        }
        let mut stack: Vec<&String> = self.children(id).iter().collect();
        while let Some(c) = stack.pop() {
            out.insert(c.clone());
            stack.extend(self.children(c));
        }
        Ok(out)
    }

    /// Preorder traversal of every tree, roots in document order.
    pub fn preorder(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<&String> = self.roots.iter().rev().collect();
        while let Some(id) = stack.pop() {
            out.push(id.as_str());
            stack.extend(self.children(id).iter().rev());
        }
        out
    }

    /// Size of the subtree rooted at every node (the node included).
    pub fn subtree_sizes(&self) -> HashMap<&str, usize> {
        let mut sizes: HashMap<&str, usize> = HashMap::with_capacity(self.nodes.len());
        for id in self.preorder().into_iter().rev() {
            let s = 1 + self.children(id).iter().map(|c| sizes[c.as_str()]).sum::<usize>();
            sizes.insert(id, s);
        }
        sizes
    }

    /// Content fingerprint used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.to_json().hash(&mut h);
        h.finish()
    }
}

fn on_cycle(nodes: &IndexMap<String, ModelNode>, start: &str) -> bool {
    let mut cur = nodes[start].parent_id.as_deref();
    let mut steps = 0;
    while let Some(p) = cur {
        if p == start {
            return true;
        }
        steps += 1;
        if steps > nodes.len() {
            return false;
        }
        cur = nodes.get(p).and_then(|n| n.parent_id.as_deref());
    }
    false
}

impl<'de> Deserialize<'de> for ModelStore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ExperimentDocument::deserialize(deserializer)?;
        ModelStore::from_document(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(models: serde_json::Value) -> String {
        json!({
            "schema_version": 1,
            "metrics": [
                {"name": "accuracy", "unit": "", "objective": "maximize", "default_encoding": "color"},
                {"name": "size", "unit": "bytes", "objective": "minimize", "default_encoding": "size"}
            ],
            "models": models
        })
        .to_string()
    }

    fn model(id: &str, parent: Option<&str>, op: Option<serde_json::Value>) -> serde_json::Value {
        json!({"id": id, "parent": parent, "operation": op, "metrics": {"accuracy": 0.9}, "tags": []})
    }

    fn prune(s: f64) -> serde_json::Value {
        json!({"name": "prune", "parameters": {"sparsity": s}})
    }

    fn op(name: &str) -> serde_json::Value {
        json!({"name": name, "parameters": {}})
    }

    #[test]
    fn minimal_store() {
        let s = load_store(&doc(json!([
            model("base", None, None),
            model("p50", Some("base"), Some(prune(0.5)))
        ])))
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.roots(), &["base".to_string()]);
        assert_eq!(s.depth("p50").unwrap(), 1);
    }

    #[test]
    fn unknown_parent_names_child() {
        let err = load_store(&doc(json!([
            model("base", None, None),
            model("p50", Some("ghost"), Some(prune(0.5)))
        ])))
        .unwrap_err();
        assert_eq!(err, StoreError::UnknownParent("p50".into()));
    }

    #[test]
    fn validation_errors() {
        let dup = doc(json!([model("a", None, None), model("a", None, None)]));
        assert_eq!(load_store(&dup).unwrap_err(), StoreError::DuplicateId("a".into()));

        let rooted = doc(json!([model("a", None, Some(op("prune")))]));
        assert_eq!(
            load_store(&rooted).unwrap_err(),
            StoreError::RootWithOperation("a".into())
        );

        let orphan_op = doc(json!([model("a", None, None), model("b", Some("a"), None)]));
        assert_eq!(
            load_store(&orphan_op).unwrap_err(),
            StoreError::MissingOperation("b".into())
        );

        let undeclared = doc(json!([
            {"id": "a", "parent": null, "operation": null, "metrics": {"latency": 1.0}}
        ]));
        assert!(matches!(
            load_store(&undeclared).unwrap_err(),
            StoreError::UndeclaredMetric { ref model, ref metric } if model == "a" && metric == "latency"
        ));

        let cycle = doc(json!([
            model("root", None, None),
            model("x", Some("y"), Some(op("prune"))),
            model("y", Some("x"), Some(op("prune")))
        ]));
        assert_eq!(load_store(&cycle).unwrap_err(), StoreError::CycleDetected("x".into()));

        let v2 = json!({"schema_version": 2, "metrics": [], "models": []}).to_string();
        assert_eq!(load_store(&v2).unwrap_err(), StoreError::UnsupportedSchema(2));
    }

    #[test]
    fn op_paths() {
        let s = load_store(&doc(json!([
            model("base", None, None),
            model("p", Some("base"), Some(prune(0.5))),
            model("q", Some("p"), Some(op("quantize"))),
            model("c", Some("q"), Some(op("calibrate"))),
            model("f", Some("c"), Some(op("finetune")))
        ])))
        .unwrap();
        assert!(s.op_path("base").unwrap().is_empty());
        let names: Vec<String> = s.op_path("q").unwrap().into_iter().map(|o| o.name).collect();
        assert_eq!(names, ["prune", "quantize"]);
        let names: Vec<String> = s.op_path("f").unwrap().into_iter().map(|o| o.name).collect();
        assert_eq!(names, ["prune", "quantize", "calibrate", "finetune"]);
        assert_eq!(
            s.op_path("nope").unwrap_err(),
            StoreError::UnknownModel("nope".into())
        );
    }

    #[test]
    fn descendants() {
        let s = load_store(&doc(json!([
            model("r", None, None),
            model("m", Some("r"), Some(op("prune"))),
            model("c1", Some("m"), Some(op("quantize"))),
            model("c2", Some("m"), Some(op("calibrate"))),
            model("g1", Some("c1"), Some(op("finetune"))),
            model("g2", Some("c1"), Some(op("calibrate"))),
            model("g3", Some("c2"), Some(op("quantize")))
        ])))
        .unwrap();
        assert!(s.select_descendants("g1", false).unwrap().is_empty());
        assert_eq!(s.select_descendants("m", false).unwrap().len(), 5);
        assert_eq!(s.select_descendants("r", true).unwrap().len(), 7);
    }

    #[test]
    fn signature_sorts_keys_and_label_keeps_order() {
        let a = Operation::new("quantize").with("bits", 8.0).with("scheme", "sym");
        let b = Operation::new("quantize").with("scheme", "sym").with("bits", 8.0);
        assert_eq!(a.signature(), b.signature());
        assert_eq!(a.signature(), r#"quantize{"bits":8,"scheme":"sym"}"#);
        assert_eq!(a.label(), "quantize(bits=8, scheme=sym)");
        assert_eq!(Operation::new("prune").with("sparsity", 0.5).label(), "prune(sparsity=0.5)");
    }

    #[test]
    fn round_trip() {
        let text = doc(json!([
            model("base", None, None),
            model("p50", Some("base"), Some(prune(0.5)))
        ]));
        let s = load_store(&text).unwrap();
        let again = load_store(&s.to_json()).unwrap();
        assert_eq!(s.to_document(), again.to_document());
    }
}
