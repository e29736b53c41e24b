use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use rc_core::aggregate::AggregateError;
use rc_core::analytics::UsageError;
use rc_core::{StoreError, ValidationError};
use serde_json::json;

/// Error responses. Every body is `{"error": message}` plus `field` and
/// `index` where they apply.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("invalid credentials")]
    BadCredentials,
    #[error("authentication required")]
    Unauthorized,
    #[error("forbidden")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(String),
    #[error("{message}")]
    BadRequest {
        message: String,
        field: Option<&'static str>,
        index: Option<usize>,
    },
    #[error("{0}")]
    Conflict(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::BadRequest {
            message: message.into(),
            field: None,
            index: None,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadCredentials | ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError::BadRequest {
            message: e.to_string(),
            field: Some(e.field()),
            index: None,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownVideo(id) => ApiError::NotFound(format!("video {id}")),
            StoreError::UnknownStudent(id) => {
                ApiError::bad_request(format!("unknown student {id}"))
            }
            StoreError::Invalid { source, .. } => source.into(),
            StoreError::InvalidSegment { index, source } => ApiError::BadRequest {
                message: format!("segment {index}: {source}"),
                field: Some(source.field()),
                index: Some(index),
            },
            StoreError::Io(e) => ApiError::Internal(e.to_string()),
            other => ApiError::Conflict(other.to_string()),
        }
    }
}

impl From<AggregateError> for ApiError {
    fn from(e: AggregateError) -> Self {
        match e {
            AggregateError::Store(s) => s.into(),
            AggregateError::NonPositiveBinWidth(_) | AggregateError::TooManyBins { .. } => {
                ApiError::BadRequest {
                    message: e.to_string(),
                    field: Some("bin_width_s"),
                    index: None,
                }
            }
            AggregateError::ZeroK => ApiError::BadRequest {
                message: e.to_string(),
                field: Some("peaks"),
                index: None,
            },
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<UsageError> for ApiError {
    fn from(e: UsageError) -> Self {
        match e {
            UsageError::Store(s) => s.into(),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        let mut body = json!({ "error": self.to_string() });
        if let ApiError::BadRequest { field, index, .. } = &self {
            if let Some(f) = field {
                body["field"] = json!(f);
            }
            if let Some(i) = index {
                body["index"] = json!(i);
            }
        }
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                header::HeaderValue::from_static("Bearer"),
            );
        }
        resp
    }
}
