//! Instrumented provider serving the user_study fixture.

use std::collections::BTreeSet;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing;
use axum::{Json, Router};
use lineage_core::behavior::ModelOutputs;
use lineage_core::layers::ModelLayers;
use lineage_server::provider::ProviderRequest;
use serde_json::{json, Value};

use super::user_study_dir;

#[derive(Clone, Copy, PartialEq)]
pub enum Behavior {
    Honest,
    WrongModel,
    DropsIds,
    ReportsUnknown,
}

#[derive(Default)]
pub struct Counters {
    pub outputs: AtomicUsize,
    pub layers: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

pub struct Mock {
    pub behavior: Behavior,
    pub delay: Duration,
    pub counters: Counters,
}

async fn outputs(State(m): State<Arc<Mock>>, Json(req): Json<ProviderRequest>) -> Json<Value> {
    m.counters.outputs.fetch_add(1, Ordering::SeqCst);
    let now = m.counters.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    m.counters.max_in_flight.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(m.delay).await;
    m.counters.in_flight.fetch_sub(1, Ordering::SeqCst);

    let path = user_study_dir().join("outputs").join(format!("{}.json", req.model));
    let all: ModelOutputs = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let wanted: BTreeSet<&String> = req.ids.iter().collect();
    let mut instances: Vec<_> = all.instances.into_iter().filter(|o| wanted.contains(&o.id)).collect();
    let mut unknown = Vec::new();
    let model = match m.behavior {
        Behavior::WrongModel => format!("{}-other", req.model),
        _ => req.model.clone(),
    };
    match m.behavior {
        Behavior::DropsIds => {
            instances.pop();
        }
        Behavior::ReportsUnknown => {
            unknown.push(instances.pop().unwrap().id);
        }
        _ => {}
    }
    Json(json!({ "model": model, "instances": instances, "unknown": unknown }))
}

async fn layers(State(m): State<Arc<Mock>>, Json(req): Json<ProviderRequest>) -> Json<Value> {
    m.counters.layers.fetch_add(1, Ordering::SeqCst);
    let path = user_study_dir().join("layers").join(format!("{}.json", req.model));
    let l: ModelLayers = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    Json(json!({ "model": req.model, "layers": l.layers, "activation_sample": l.activation_sample }))
}

/// Starts a mock provider on an ephemeral port.
pub async fn start_mock(behavior: Behavior, delay: Duration) -> (String, Arc<Mock>) {
    let mock = Arc::new(Mock {
        behavior,
        delay,
        counters: Counters::default(),
    });
    let app = Router::new()
        .route("/outputs", routing::post(outputs))
        .route("/layers", routing::post(layers))
        .with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), mock)
}
