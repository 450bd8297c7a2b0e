//! Per-model outputs and layer summaries, from static files or from an
//! HTTP provider, behind a small cache.
//!
//! Provider contract: `POST {base}/outputs` and `POST {base}/layers` with a
//! [`ProviderRequest`] body. Responses mirror `outputs.json` and
//! `layers.json` and must echo the requested model and ids; ids the
//! provider cannot serve go in `unknown` instead of being dropped.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use lineage_core::behavior::{ModelOutputs, OutputEntry};
use lineage_core::layers::{LayerEntry, ModelLayers};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArtifactError {
    #[error("ProviderUnavailable: {0}")]
    ProviderUnavailable(String),
    #[error("ProviderProtocolViolation: {0}")]
    ProviderProtocolViolation(String),
    #[error("MissingOutput: model {model} has no output for {ids:?}")]
    MissingOutput { model: String, ids: Vec<String> },
    #[error("MissingOutput: {0}")]
    MissingArtifact(String),
    #[error("InvalidArtifact: {0}")]
    InvalidArtifact(String),
}

impl ArtifactError {
    pub fn code(&self) -> &'static str {
        match self {
            ArtifactError::ProviderUnavailable(_) => "ProviderUnavailable",
            ArtifactError::ProviderProtocolViolation(_) => "ProviderProtocolViolation",
            ArtifactError::MissingOutput { .. } | ArtifactError::MissingArtifact(_) => "MissingOutput",
            ArtifactError::InvalidArtifact(_) => "InvalidArtifact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Outputs,
    Layers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model: String,
    pub kind: ArtifactKind,
    /// Instance ids, for outputs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    /// Layer paths; empty asks for every layer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputsResponse {
    pub model: String,
    pub instances: Vec<OutputEntry>,
    #[serde(default)]
    pub unknown: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayersResponse {
    pub model: String,
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub activation_sample: Vec<String>,
    #[serde(default)]
    pub unknown: Vec<String>,
}

pub struct ProviderClient {
    base: String,
    http: reqwest::Client,
    permits: Semaphore,
}

impl ProviderClient {
    pub fn new(base: &str, max_in_flight: usize) -> ProviderClient {
        ProviderClient {
            base: base.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
            permits: Semaphore::new(max_in_flight.max(1)),
        }
    }

    async fn post<T: DeserializeOwned>(&self, endpoint: &str, req: &ProviderRequest) -> Result<T, ArtifactError> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let url = format!("{}/{endpoint}", self.base);
        let resp = self
            .http
            .post(&url)
            .json(req)
            .send()
            .await
            .map_err(|e| ArtifactError::ProviderUnavailable(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(ArtifactError::ProviderUnavailable(format!("{url}: HTTP {}", resp.status())));
        }
        let body = resp
            .bytes()
            .await
            .map_err(|e| ArtifactError::ProviderUnavailable(format!("{url}: {e}")))?;
        serde_json::from_slice(&body).map_err(|e| ArtifactError::ProviderProtocolViolation(format!("{url}: {e}")))
    }
}

/// The echo invariant: same model, no duplicates, and every requested id
/// either served or reported unknown.
fn check_echo<'a>(
    req: &ProviderRequest,
    model: &str,
    served: impl Iterator<Item = &'a str>,
    unknown: &[String],
    requested: &[String],
) -> Result<(), ArtifactError> {
    let violation = |why: String| ArtifactError::ProviderProtocolViolation(why);
    if model != req.model {
        return Err(violation(format!("asked for model {}, got {model}", req.model)));
    }
    let mut seen = BTreeSet::new();
    for id in served {
        if !seen.insert(id) {
            return Err(violation(format!("{id} returned twice")));
        }
    }
    if requested.is_empty() {
        return Ok(());
    }
    let wanted: BTreeSet<&str> = requested.iter().map(String::as_str).collect();
    let mut reported = seen.iter().copied().chain(unknown.iter().map(String::as_str));
    if let Some(extra) = reported.find(|id| !wanted.contains(id)) {
        return Err(violation(format!("{extra} was not requested")));
    }
    let unknown: BTreeSet<&str> = unknown.iter().map(String::as_str).collect();
    if let Some(dropped) = requested.iter().find(|id| !seen.contains(id.as_str()) && !unknown.contains(id.as_str())) {
        return Err(violation(format!("{dropped} neither served nor reported unknown")));
    }
    if !unknown.is_empty() {
        return Err(ArtifactError::MissingOutput {
            model: req.model.clone(),
            ids: unknown.into_iter().map(String::from).collect(),
        });
    }
    Ok(())
}

pub enum Source {
    Static {
        outputs_dir: Option<PathBuf>,
        layers_dir: Option<PathBuf>,
    },
    Provider(ProviderClient),
}

#[derive(Clone)]
enum Cached {
    Outputs(Arc<ModelOutputs>),
    Layers(Arc<ModelLayers>),
}

type CacheKey = (ArtifactKind, String, u64);

/// Artifact access with a least-recently-used cache keyed by
/// (kind, model, hash of the requested id set).
pub struct Artifacts {
    source: Source,
    capacity: usize,
    cache: Mutex<IndexMap<CacheKey, Cached>>,
}

fn id_set_hash(ids: &[String]) -> u64 {
    let sorted: BTreeSet<&String> = ids.iter().collect();
    let mut h = DefaultHasher::new();
    sorted.hash(&mut h);
    h.finish()
}

impl Artifacts {
    pub fn new(source: Source, capacity: usize) -> Artifacts {
        Artifacts {
            source,
            capacity: capacity.max(1),
            cache: Mutex::new(IndexMap::new()),
        }
    }

    fn cached(&self, key: &CacheKey) -> Option<Cached> {
        let mut cache = self.cache.lock().expect("cache lock");
        let hit = cache.shift_remove(key)?;
        cache.insert(key.clone(), hit.clone());
        Some(hit)
    }

    fn remember(&self, key: CacheKey, value: Cached) {
        let mut cache = self.cache.lock().expect("cache lock");
        cache.shift_remove(&key);
        cache.insert(key, value);
        while cache.len() > self.capacity {
            cache.shift_remove_index(0);
        }
    }

    /// Outputs of `model` for `ids`, in request order. An empty `ids`
    /// returns everything the source has.
    pub async fn outputs(&self, model: &str, ids: &[String]) -> Result<Arc<ModelOutputs>, ArtifactError> {
        let key = (ArtifactKind::Outputs, model.to_string(), id_set_hash(ids));
        if let Some(Cached::Outputs(o)) = self.cached(&key) {
            return Ok(o);
        }
        let outputs = match &self.source {
            Source::Static { outputs_dir, .. } => {
                let dir = outputs_dir
                    .as_ref()
                    .ok_or_else(|| ArtifactError::MissingArtifact("no outputs directory configured".into()))?;
                let all: ModelOutputs = read_json(dir.join(format!("{model}.json"))).await?;
                if all.model != model {
                    return Err(ArtifactError::InvalidArtifact(format!("outputs file for {model} names {}", all.model)));
                }
                select_outputs(all, ids)?
            }
            Source::Provider(client) => {
                let req = ProviderRequest {
                    model: model.to_string(),
                    kind: ArtifactKind::Outputs,
                    ids: ids.to_vec(),
                    paths: Vec::new(),
                };
                let resp: OutputsResponse = client.post("outputs", &req).await?;
                check_echo(&req, &resp.model, resp.instances.iter().map(|o| o.id.as_str()), &resp.unknown, ids)?;
                let outputs = ModelOutputs {
                    model: resp.model,
                    instances: resp.instances,
                };
                select_outputs(outputs, ids)?
            }
        };
        let outputs = Arc::new(outputs);
        self.remember(key, Cached::Outputs(outputs.clone()));
        Ok(outputs)
    }

    pub async fn layers(&self, model: &str) -> Result<Arc<ModelLayers>, ArtifactError> {
        let key = (ArtifactKind::Layers, model.to_string(), id_set_hash(&[]));
        if let Some(Cached::Layers(l)) = self.cached(&key) {
            return Ok(l);
        }
        let layers = match &self.source {
            Source::Static { layers_dir, .. } => {
                let dir = layers_dir
                    .as_ref()
                    .ok_or_else(|| ArtifactError::MissingArtifact("no layers directory configured".into()))?;
                let layers: ModelLayers = read_json(dir.join(format!("{model}.json"))).await?;
                if layers.model != model {
                    return Err(ArtifactError::InvalidArtifact(format!("layers file for {model} names {}", layers.model)));
                }
                layers
            }
            Source::Provider(client) => {
                let req = ProviderRequest {
                    model: model.to_string(),
                    kind: ArtifactKind::Layers,
                    ids: Vec::new(),
                    paths: Vec::new(),
                };
                let resp: LayersResponse = client.post("layers", &req).await?;
                check_echo(&req, &resp.model, resp.layers.iter().map(|l| l.path.as_str()), &resp.unknown, &[])?;
                ModelLayers {
                    model: resp.model,
                    layers: resp.layers,
                    activation_sample: resp.activation_sample,
                }
            }
        };
        let layers = Arc::new(layers);
        self.remember(key, Cached::Layers(layers.clone()));
        Ok(layers)
    }
}

fn select_outputs(all: ModelOutputs, ids: &[String]) -> Result<ModelOutputs, ArtifactError> {
    if ids.is_empty() {
        return Ok(all);
    }
    let mut by_id: IndexMap<String, OutputEntry> = all.instances.into_iter().map(|o| (o.id.clone(), o)).collect();
    let mut missing = Vec::new();
    let mut instances = Vec::with_capacity(ids.len());
    for id in ids {
        match by_id.shift_remove(id) {
            Some(o) => instances.push(o),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ArtifactError::MissingOutput { model: all.model, ids: missing });
    }
    Ok(ModelOutputs {
        model: all.model,
        instances,
    })
}

async fn read_json<T: DeserializeOwned>(path: PathBuf) -> Result<T, ArtifactError> {
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|e| ArtifactError::MissingArtifact(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ArtifactError::InvalidArtifact(format!("{}: {e}", path.display())))
}
