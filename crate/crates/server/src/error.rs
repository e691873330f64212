use annolap_core::{
    describe, AnchorError, AnnotationError, OperationError, PreferenceError, SessionError,
};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

/// Error body `{code, message, detail}`. Codes are stable identifiers
/// clients may match on.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("unknown session '{id}'"),
        )
    }

    pub fn storage(err: std::io::Error) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "storage_failed",
            err.to_string(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "code": self.code,
            "message": self.message,
            "detail": self.detail,
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let message = describe(&err);
        match err {
            SessionError::Operation(OperationError::NoContext) => {
                ApiError::new(StatusCode::CONFLICT, "no_context", message)
            }
            SessionError::Operation(OperationError::Context(e)) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_operation",
                message,
            )
            .with_detail(json!({ "rule": format!("{e:?}") })),
            SessionError::Data(_) => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "evaluation_failed",
                message,
            ),
            SessionError::StaleToken { given, current } => {
                ApiError::new(StatusCode::CONFLICT, "stale_step", message)
                    .with_detail(json!({ "given": given, "current": current }))
            }
            SessionError::NoRecommendation { index, len } => {
                ApiError::new(StatusCode::NOT_FOUND, "no_recommendation", message)
                    .with_detail(json!({ "index": index, "len": len }))
            }
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(err: AnnotationError) -> Self {
        let message = describe(&err);
        match err {
            AnnotationError::Anchor(AnchorError::Syntax(s)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_anchor", message)
                    .with_detail(json!({ "position": s.position }))
            }
            AnnotationError::Anchor(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_anchor", message)
            }
            AnnotationError::Unknown(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_annotation", message)
            }
            AnnotationError::Io(e) => ApiError::storage(e),
            _ => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_annotation",
                message,
            ),
        }
    }
}

impl From<PreferenceError> for ApiError {
    fn from(err: PreferenceError) -> Self {
        let message = describe(&err);
        match err {
            PreferenceError::Unknown(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_preference", message)
            }
            PreferenceError::DuplicateId(_) => {
                ApiError::new(StatusCode::CONFLICT, "duplicate_preference", message)
            }
            PreferenceError::Syntax(s) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_preference",
                message,
            )
            .with_detail(json!({ "position": s.position })),
            PreferenceError::Io(e) => ApiError::storage(e),
            _ => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_preference",
                message,
            ),
        }
    }
}
