//! Startup errors and the JSON error body of the HTTP API.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lineage_core::analytics::AnalyticsError;
use lineage_core::behavior::BehaviorError;
use lineage_core::layers::LayerError;
use lineage_core::selection::SelectionError;
use lineage_core::StoreError;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::provider::ArtifactError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("BadConfig: {0}")]
    BadConfig(String),
    #[error("LoadFailure: {0}")]
    LoadFailure(String),
    #[error("Io: {0}")]
    Io(String),
}

/// `{code, message, detail}` with the HTTP status it is sent with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    /// Unknown identifiers are 404, everything else the caller got wrong
    /// is 400.
    fn from_code(code: &'static str, message: String) -> Self {
        match code {
            "UnknownModel" | "UnknownMetric" | "MissingOutput" => ApiError::not_found(code, message),
            _ => ApiError::bad_request(code, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<SelectionError> for ApiError {
    fn from(e: SelectionError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<BehaviorError> for ApiError {
    fn from(e: BehaviorError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<LayerError> for ApiError {
    fn from(e: LayerError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<ArtifactError> for ApiError {
    fn from(e: ArtifactError) -> Self {
        let status = match &e {
            ArtifactError::ProviderUnavailable(_) | ArtifactError::ProviderProtocolViolation(_) => StatusCode::BAD_GATEWAY,
            ArtifactError::MissingOutput { .. } | ArtifactError::MissingArtifact(_) => StatusCode::NOT_FOUND,
            ArtifactError::InvalidArtifact(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}
