use std::path::PathBuf;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;
use weat_core::{InterchangeError, ModelError, PipelineError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("example {0:?} already exists")]
    AlreadyExists(String),
    #[error("example {0:?} already has a generation job in progress or awaiting review")]
    JobConflict(String),
    #[error("revision {given} is stale; the example is at revision {current}")]
    VersionConflict { given: u64, current: u64 },
    #[error("example {0:?} has no generation awaiting review")]
    NoStagedJob(String),
    #[error("{0}")]
    Validation(String),
    #[error("corrupt record {}: {message}", path.display())]
    CorruptRecord { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::AlreadyExists(_) => "already_exists",
            ServiceError::JobConflict(_) => "job_conflict",
            ServiceError::VersionConflict { .. } => "version_conflict",
            ServiceError::NoStagedJob(_) => "no_staged_job",
            ServiceError::Validation(_) => "validation",
            ServiceError::CorruptRecord { .. } => "corrupt_record",
            ServiceError::Io { .. } => "io",
            ServiceError::Config(_) => "config",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::AlreadyExists(_)
            | ServiceError::JobConflict(_)
            | ServiceError::VersionConflict { .. }
            | ServiceError::NoStagedJob(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::CorruptRecord { .. } | ServiceError::Io { .. } | ServiceError::Config(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

impl From<ModelError> for ServiceError {
    fn from(e: ModelError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<InterchangeError> for ServiceError {
    fn from(e: InterchangeError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(e: JsonRejection) -> Self {
        ServiceError::Validation(e.body_text())
    }
}

impl From<PathRejection> for ServiceError {
    fn from(e: PathRejection) -> Self {
        ServiceError::Validation(e.body_text())
    }
}

impl From<QueryRejection> for ServiceError {
    fn from(e: QueryRejection) -> Self {
        ServiceError::Validation(e.body_text())
    }
}
