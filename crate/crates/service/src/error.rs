use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use maod_core::composer::ComposeError;
use maod_core::gateway::GatewayError;
use serde_json::json;
use thiserror::Error;

use crate::storage::StorageError;

/// Every failure the REST API reports, each with a stable code.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    ModelInitialization(String),
    #[error("{0}")]
    FileProcessing(String),
    #[error("{0}")]
    Decomposition(String),
    #[error("decomposition agent unavailable: {0}")]
    AgentUnavailable(String),
    #[error("{0}")]
    Validation(String),
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("response {0} not found")]
    ResponseNotFound(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("stale event: {0}")]
    StaleEvent(String),
    #[error("{0}")]
    ProviderFailure(String),
    #[error("{0}")]
    CorruptCheckpoint(String),
    #[error("{0}")]
    Storage(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::ModelInitialization(_) => "ModelInitializationError",
            ServiceError::FileProcessing(_) => "FileProcessingError",
            ServiceError::Decomposition(_) | ServiceError::AgentUnavailable(_) => "DecompositionError",
            ServiceError::Validation(_) => "ValidationError",
            ServiceError::SessionNotFound(_) => "SessionNotFound",
            ServiceError::ResponseNotFound(_) => "ResponseNotFound",
            ServiceError::UnknownComponent(_) => "UnknownComponent",
            ServiceError::StaleEvent(_) => "StaleEvent",
            ServiceError::ProviderFailure(_) => "ProviderFailure",
            ServiceError::CorruptCheckpoint(_) => "CorruptCheckpoint",
            ServiceError::Storage(_) => "StorageError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::ModelInitialization(_) | ServiceError::FileProcessing(_) | ServiceError::Validation(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::SessionNotFound(_)
            | ServiceError::ResponseNotFound(_)
            | ServiceError::UnknownComponent(_) => StatusCode::NOT_FOUND,
            ServiceError::StaleEvent(_) | ServiceError::Decomposition(_) => StatusCode::CONFLICT,
            ServiceError::AgentUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::ProviderFailure(_) => StatusCode::BAD_GATEWAY,
            ServiceError::CorruptCheckpoint(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}

impl From<StorageError> for ServiceError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::Corrupt { .. } => ServiceError::CorruptCheckpoint(e.to_string()),
            StorageError::Io(_) => ServiceError::Storage(e.to_string()),
        }
    }
}

impl From<GatewayError> for ServiceError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ModelInitializationError(_)
            | GatewayError::InvalidMetadata(_)
            | GatewayError::DuplicateVendor(_) => ServiceError::ModelInitialization(e.to_string()),
            GatewayError::ProviderFailure(_) => ServiceError::ProviderFailure(e.to_string()),
            GatewayError::UnknownComponent(id) => ServiceError::UnknownComponent(id.to_string()),
            GatewayError::InvalidResponse(_) => ServiceError::Decomposition(e.to_string()),
        }
    }
}

impl From<ComposeError> for ServiceError {
    fn from(e: ComposeError) -> Self {
        match e {
            ComposeError::UnknownComponent(id) => ServiceError::UnknownComponent(id.to_string()),
            ComposeError::StaleEvent { .. } => ServiceError::StaleEvent(e.to_string()),
            ComposeError::EmptyContent(_) | ComposeError::LineageMismatch => ServiceError::Validation(e.to_string()),
        }
    }
}
