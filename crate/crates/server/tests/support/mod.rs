//! Shared fixture and request helpers for the server tests.
#![allow(dead_code)]

pub mod mock;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use lineage_core::Exec;
use lineage_server::{build_state, router, SessionConfig};
use lineage_sim::scenario::{emit_fixtures, Scenario};
use serde_json::Value;
use tower::ServiceExt;

pub const FIXTURE_SEED: u64 = 0;

/// The user_study fixture, emitted once per test binary.
pub fn user_study_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        emit_fixtures(Scenario::UserStudy, FIXTURE_SEED, dir.path(), Exec::default()).unwrap();
        dir
    })
    .path()
}

pub fn user_study_app() -> Router {
    let state = build_state(&SessionConfig::for_fixture_dir(user_study_dir())).unwrap();
    router(Arc::new(state))
}

/// user_study session whose outputs and layers come from `url`.
pub fn provider_app(url: &str) -> Router {
    let config = SessionConfig {
        provider_url: Some(url.to_string()),
        ..SessionConfig::for_fixture_dir(user_study_dir())
    };
    router(Arc::new(build_state(&config).unwrap()))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

/// Compares `actual` with `tests/golden/<name>.json`; `UPDATE_GOLDEN=1`
/// rewrites the file instead.
pub fn check_golden(name: &str, actual: &Value) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let mut text = serde_json::to_string_pretty(actual).unwrap();
        text.push('\n');
        fs::write(&path, text).unwrap();
        return Ok(());
    }
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    let expected: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if &expected == actual {
        Ok(())
    } else {
        Err(format!("{name}: response differs from {}", path.display()))
    }
}

/// Every golden request: (name, method, uri, body).
pub fn golden_requests() -> Vec<(&'static str, Method, &'static str, Option<Value>)> {
    use serde_json::json;
    vec![
        ("models", Method::GET, "/v1/models", None),
        ("model_p50_ft", Method::GET, "/v1/models/p50-ft", None),
        ("layout_by_step", Method::GET, "/v1/layout", None),
        ("layout_by_operation", Method::GET, "/v1/layout?mode=by_operation&color=accuracy&size=size", None),
        ("histogram_accuracy", Method::GET, "/v1/metrics/accuracy/histogram?bins=5", None),
        (
            "filters_accuracy",
            Method::POST,
            "/v1/filters",
            Some(json!({ "filters": [{ "metric": "accuracy", "low": 0.9 }] })),
        ),
        ("pareto_size_accuracy", Method::GET, "/v1/pareto?x=size&y=accuracy", None),
        (
            "compare_sparsity",
            Method::POST,
            "/v1/selection/compare",
            Some(json!({ "ids": ["p10", "p30", "p50", "p70", "p90"], "metric": "accuracy" })),
        ),
        (
            "compare_recovery",
            Method::POST,
            "/v1/selection/compare",
            Some(json!({ "ids": ["p50", "p50-ft", "p50-cal", "p90", "p90-ft", "p90-cal"], "metric": "accuracy" })),
        ),
        (
            "behaviors_groups",
            Method::POST,
            "/v1/behaviors",
            Some(json!({
                "ids": ["base", "p90", "q8"],
                "relative_mode": "pct_error_change",
                "group_by": "group",
                "sort": { "model": "p90", "field": "relative", "direction": "desc" }
            })),
        ),
        (
            "behaviors_instances_page",
            Method::POST,
            "/v1/behaviors",
            Some(json!({
                "ids": ["p90", "p90-ft"],
                "base": "base",
                "metric": "kl_divergence",
                "relative_mode": "difference",
                "sort": { "model": "p90", "field": "absolute", "direction": "desc" },
                "offset": 0,
                "limit": 5
            })),
        ),
        (
            "layers_fc2_prune",
            Method::POST,
            "/v1/layers",
            Some(json!({ "ids": ["base", "pl-fc2-90"], "kind": "weights", "sort": "change" })),
        ),
        (
            "layers_activations",
            Method::POST,
            "/v1/layers",
            Some(json!({ "ids": ["q8", "p90"], "base": "base", "kind": "activations", "sort": "path" })),
        ),
    ]
}
