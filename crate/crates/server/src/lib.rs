//! HTTP facade and command line over the workbench engine.

pub mod api;
pub mod config;
pub mod error;
pub mod provider;

use std::fs;
use std::sync::Arc;

use lineage_core::behavior::Dataset;
use lineage_core::selection::SimplifyConfig;
use lineage_core::{load_store, Exec};

pub use api::{router, AppState};
pub use config::SessionConfig;
pub use error::{ApiError, ServiceError};
pub use provider::{Artifacts, ProviderClient, Source};

/// Loads the experiment and dataset named by `config`.
pub fn build_state(config: &SessionConfig) -> Result<AppState, ServiceError> {
    config.validate()?;
    let read = |p: &std::path::Path| {
        fs::read_to_string(p).map_err(|e| ServiceError::LoadFailure(format!("{}: {e}", p.display())))
    };
    let store = load_store(&read(&config.experiments)?)
        .map_err(|e| ServiceError::LoadFailure(format!("{}: {e}", config.experiments.display())))?;
    let dataset = match &config.dataset {
        Some(p) => {
            let d: Dataset = serde_json::from_str(&read(p)?)
                .map_err(|e| ServiceError::LoadFailure(format!("{}: {e}", p.display())))?;
            d.validate()
                .map_err(|e| ServiceError::LoadFailure(format!("{}: {e}", p.display())))?;
            Some(d)
        }
        None => None,
    };
    // The provider wins when both sources are configured.
    let source = match &config.provider_url {
        Some(url) => Source::Provider(ProviderClient::new(url, config.provider_concurrency)),
        None => Source::Static {
            outputs_dir: config.outputs_dir.clone(),
            layers_dir: config.layers_dir.clone(),
        },
    };
    Ok(AppState {
        store,
        dataset,
        artifacts: Artifacts::new(source, config.cache_size),
        simplify: SimplifyConfig::default(),
        exec: Exec::default(),
    })
}

/// Serves `/v1` until the process is stopped.
pub async fn serve(config: &SessionConfig) -> Result<(), ServiceError> {
    let state = Arc::new(build_state(config)?);
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::BadConfig(format!("cannot bind {addr}: {e}")))?;
    tracing::info!(%addr, models = state.store.len(), "serving /v1");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))
}
