use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use glad_core::GladError;
use serde::{Deserialize, Serialize};

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<GladError> for ApiError {
    fn from(e: GladError) -> Self {
        use GladError::*;
        let (status, code) = match &e {
            InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid_config"),
            Csv(_) | NonNumeric { .. } | UnknownLabel { .. } | MissingLabelColumn(_) | EmptyDataset
            | DimensionMismatch { .. } => (StatusCode::BAD_REQUEST, "dataset_error"),
            QueryMismatch { .. } => (StatusCode::CONFLICT, "query_mismatch"),
            NoPendingQuery | BudgetExhausted | SessionExhausted => (StatusCode::CONFLICT, "session_exhausted"),
            IndexOutOfRange { .. } => (StatusCode::NOT_FOUND, "unknown_instance"),
            DegeneratePerturbation => (StatusCode::UNPROCESSABLE_ENTITY, "explanation_failed"),
            SnapshotVersion(_) => (StatusCode::INTERNAL_SERVER_ERROR, "snapshot_version"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
