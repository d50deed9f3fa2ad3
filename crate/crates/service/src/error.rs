use std::fmt;
use std::path::{Path, PathBuf};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use evidence_core::evidence::EvidenceError;
use evidence_core::explain::ExplainError;
use evidence_core::ingest::IngestError;

/// Pipeline stage named in stage errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Featurize,
    Train,
    Evaluate,
    Importance,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl fmt::Display) -> Self {
        ServiceError::Artifact {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn stage(stage: Stage, cause: impl fmt::Display) -> Self {
        ServiceError::Stage {
            stage,
            message: cause.to_string(),
        }
    }

    /// Tags an error with the stage it came from, unless it already has one.
    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ ServiceError::Stage { .. } => e,
            e => ServiceError::stage(stage, e),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Stage { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Io { .. }
            | ServiceError::Bind { .. }
            | ServiceError::Artifact { .. }
            | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<IngestError> for ServiceError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::ShaConflict(_) => ServiceError::Conflict(e.to_string()),
            e => ServiceError::BadRequest(e.to_string()),
        }
    }
}

impl From<EvidenceError> for ServiceError {
    fn from(e: EvidenceError) -> Self {
        match e {
            EvidenceError::UnknownSha(_) => ServiceError::NotFound(e.to_string()),
            EvidenceError::MissingActual(_) => ServiceError::Conflict(e.to_string()),
            EvidenceError::EmptyTerm | EvidenceError::InvalidK | EvidenceError::UnknownMatchMode(_) => {
                ServiceError::BadRequest(e.to_string())
            }
            e => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<ExplainError> for ServiceError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::UnknownMetric(_)
            | ExplainError::NoRepeats
            | ExplainError::UnknownField(_)
            | ExplainError::InvalidValue { .. } => ServiceError::BadRequest(e.to_string()),
            ExplainError::TooFewRows(_)
            | ExplainError::MissingClass(_)
            | ExplainError::SchemaMismatch { .. } => ServiceError::Conflict(e.to_string()),
            ExplainError::Model(_) => ServiceError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
