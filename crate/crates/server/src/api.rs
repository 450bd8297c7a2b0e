//! `/v1` routes. Every response is computed from the immutable store and
//! the artifact cache, so identical requests get identical bodies.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use lineage_core::analytics::{apply_filters, metric_histogram, pareto_front, MetricFilter};
use lineage_core::behavior::{
    aggregate_rows, default_base, eval_models, sort_rows, BehaviorRow, ComparisonMetric, Dataset, GroupBy, ModelOutputs,
    RelativeMode, SortKey,
};
use lineage_core::layers::{build_layer_tree, diff_tree, ModelLayers, TensorKind};
use lineage_core::layout::{compute_layout, node_tooltip, LayoutMode, LayoutOptions};
use lineage_core::selection::{build_comparison, SimplifyConfig};
use lineage_core::store::Encoding;
use lineage_core::{Exec, ModelStore};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::provider::Artifacts;

pub const DEFAULT_HISTOGRAM_BINS: usize = 10;
pub const DEFAULT_PAGE_LIMIT: usize = 100;

pub struct AppState {
    pub store: ModelStore,
    pub dataset: Option<Dataset>,
    pub artifacts: Artifacts,
    pub simplify: SimplifyConfig,
    pub exec: Exec,
}

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let v1 = Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model))
        .route("/layout", get(layout))
        .route("/metrics/{name}/histogram", get(histogram))
        .route("/filters", post(filters))
        .route("/pareto", get(pareto))
        .route("/selection/compare", post(compare))
        .route("/behaviors", post(behaviors))
        .route("/layers", post(layers));
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::not_found("NotFound", "no such endpoint") })
        .with_state(state)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response types serialize")
}

fn query(q: Result<Query<HashMap<String, String>>, QueryRejection>) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request("BadRequest", e.body_text()))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(b)| b).map_err(|e| ApiError::bad_request("BadRequest", e.body_text()))
}

fn required<'a>(q: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    q.get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request("BadRequest", format!("missing query parameter {key}")))
}

/// Known ids of `ids` in store order; unknown ids are a 404.
fn selection(store: &ModelStore, ids: &[String]) -> Result<Vec<String>, ApiError> {
    if ids.is_empty() {
        return Err(ApiError::bad_request("EmptySelection", "select at least one model"));
    }
    if let Some(unknown) = ids.iter().find(|id| !store.contains(id)) {
        return Err(ApiError::not_found("UnknownModel", format!("UnknownModel: {unknown}")).with_detail(json!({ "id": unknown })));
    }
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    Ok(store.ids().filter(|id| wanted.contains(id)).map(String::from).collect())
}

async fn list_models(State(s): Shared) -> ApiResult {
    let models: Vec<_> = s.store.nodes().collect();
    Ok(Json(json!({
        "count": models.len(),
        "metrics": s.store.metrics(),
        "roots": s.store.roots(),
        "models": models,
    })))
}

async fn get_model(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let node = s.store.node(&id)?;
    let tooltip: Vec<Value> = node_tooltip(&s.store, &id)?
        .into_iter()
        .map(|(label, value)| json!({ "label": label, "value": value }))
        .collect();
    Ok(Json(json!({
        "model": node,
        "depth": s.store.depth(&id)?,
        "children": s.store.children(&id),
        "op_path": s.store.op_path(&id)?,
        "tooltip": tooltip,
    })))
}

/// `color`/`size` default to the metrics declared with that encoding;
/// `none` turns an encoding off.
fn encoding_metric(store: &ModelStore, q: &HashMap<String, String>, key: &str, enc: Encoding) -> Option<String> {
    match q.get(key).map(String::as_str) {
        Some("none") | Some("") => None,
        Some(m) => Some(m.to_string()),
        None => store.default_metric(enc).map(|m| m.name.clone()),
    }
}

async fn layout(State(s): Shared, q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    let mode: LayoutMode = match q.get("mode") {
        Some(m) => m.parse().map_err(|e: String| ApiError::bad_request("BadRequest", e))?,
        None => LayoutMode::ByStep,
    };
    let color = encoding_metric(&s.store, &q, "color", Encoding::Color);
    let size = encoding_metric(&s.store, &q, "size", Encoding::Size);
    let layout = compute_layout(&s.store, mode, color.as_deref(), size.as_deref(), None, LayoutOptions::default())?;
    Ok(Json(to_value(&layout)))
}

async fn histogram(
    State(s): Shared,
    Path(name): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    let bins = match q.get("bins") {
        Some(b) => b
            .parse()
            .map_err(|_| ApiError::bad_request("InvalidBins", format!("bins {b:?} is not a positive integer")))?,
        None => DEFAULT_HISTOGRAM_BINS,
    };
    Ok(Json(to_value(&metric_histogram(&s.store, &name, bins)?)))
}

/// A filter range; an omitted bound is open.
#[derive(Debug, Deserialize)]
struct FilterRange {
    metric: String,
    #[serde(default)]
    low: Option<f64>,
    #[serde(default)]
    high: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct FiltersBody {
    #[serde(default)]
    filters: Vec<FilterRange>,
}

async fn filters(State(s): Shared, b: Result<Json<FiltersBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    let filters: Vec<MetricFilter> = b
        .filters
        .into_iter()
        .map(|f| MetricFilter::new(f.metric, f.low.unwrap_or(f64::NEG_INFINITY), f.high.unwrap_or(f64::INFINITY)))
        .collect();
    let enabled = apply_filters(&s.store, &filters)?;
    let enabled: Vec<&str> = s.store.ids().filter(|id| enabled.contains(*id)).collect();
    Ok(Json(json!({ "enabled": enabled })))
}

async fn pareto(State(s): Shared, q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    let (x, y) = (required(&q, "x")?, required(&q, "y")?);
    let front = pareto_front(&s.store, x, y)?;
    Ok(Json(json!({ "x": x, "y": y, "front": front })))
}

#[derive(Debug, Deserialize)]
struct CompareBody {
    ids: Vec<String>,
    metric: String,
}

async fn compare(State(s): Shared, b: Result<Json<CompareBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    let ids: BTreeSet<String> = selection(&s.store, &b.ids)?.into_iter().collect();
    let result = build_comparison(&s.store, &ids, &b.metric, &s.simplify)?;
    Ok(Json(to_value(&result)))
}

fn default_metric() -> ComparisonMetric {
    ComparisonMetric::Correctness
}

fn default_relative() -> RelativeMode {
    RelativeMode::Absolute
}

fn default_group_by() -> GroupBy {
    GroupBy::Instance
}

fn default_limit() -> usize {
    DEFAULT_PAGE_LIMIT
}

#[derive(Debug, Deserialize)]
struct BehaviorsBody {
    ids: Vec<String>,
    #[serde(default)]
    base: Option<String>,
    #[serde(default = "default_metric")]
    metric: ComparisonMetric,
    #[serde(default = "default_relative")]
    relative_mode: RelativeMode,
    #[serde(default = "default_group_by")]
    group_by: GroupBy,
    #[serde(default)]
    sort: Option<SortKey>,
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

/// Selected ids plus the base, in store order, with the base resolved.
fn with_base(store: &ModelStore, ids: &[String], base: Option<&String>) -> Result<(Vec<String>, String), ApiError> {
    let mut ids = selection(store, ids)?;
    let base = match base {
        Some(b) => b.clone(),
        None => default_base(store, &ids.iter().cloned().collect())?,
    };
    if !ids.contains(&base) {
        ids = selection(store, &[ids, vec![base.clone()]].concat())?;
    }
    Ok((ids, base))
}

async fn behaviors(State(s): Shared, b: Result<Json<BehaviorsBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    let dataset = s
        .dataset
        .as_ref()
        .ok_or_else(|| ApiError::bad_request("NoDataset", "this session has no dataset"))?;
    let (ids, base) = with_base(&s.store, &b.ids, b.base.as_ref())?;
    let instance_ids: Vec<String> = dataset.instances.iter().map(|i| i.id.clone()).collect();
    let mut outputs: Vec<Arc<ModelOutputs>> = Vec::with_capacity(ids.len());
    for id in &ids {
        outputs.push(s.artifacts.outputs(id, &instance_ids).await?);
    }
    let base_outputs = outputs[ids.iter().position(|i| *i == base).expect("base is selected")].clone();
    let refs: Vec<&ModelOutputs> = outputs.iter().map(|o| o.as_ref()).collect();
    let values = eval_models(b.metric, &refs, Some(&base_outputs), dataset, s.exec)?;
    let mut rows: Vec<BehaviorRow> = aggregate_rows(&values, dataset, b.group_by, &base, b.relative_mode)?;
    if let Some(key) = &b.sort {
        rows = sort_rows(rows, key)?;
    }
    let total = rows.len();
    let page: Vec<BehaviorRow> = rows.into_iter().skip(b.offset).take(b.limit).collect();
    Ok(Json(json!({
        "base": base,
        "models": ids,
        "metric": b.metric,
        "relative_mode": b.relative_mode,
        "group_by": b.group_by,
        "total": total,
        "offset": b.offset,
        "limit": b.limit,
        "rows": page,
    })))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LayerSort {
    Change,
    Path,
}

fn default_kind() -> TensorKind {
    TensorKind::Weights
}

fn default_layer_sort() -> LayerSort {
    LayerSort::Change
}

#[derive(Debug, Deserialize)]
struct LayersBody {
    ids: Vec<String>,
    #[serde(default)]
    base: Option<String>,
    #[serde(default = "default_kind")]
    kind: TensorKind,
    #[serde(default = "default_layer_sort")]
    sort: LayerSort,
}

async fn layers(State(s): Shared, b: Result<Json<LayersBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    let (ids, base) = with_base(&s.store, &b.ids, b.base.as_ref())?;
    let mut summaries: Vec<ModelLayers> = Vec::with_capacity(ids.len());
    for id in &ids {
        summaries.push(s.artifacts.layers(id).await?.as_ref().clone());
    }
    let tree = build_layer_tree(&summaries)?;
    let mut diff = diff_tree(&tree, &base, b.kind, s.exec)?;
    if let LayerSort::Change = b.sort {
        diff.sort_by_change();
    }
    Ok(Json(json!({
        "base": base,
        "kind": b.kind,
        "models": ids,
        "tree": diff,
    })))
}
