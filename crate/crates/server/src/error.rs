use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fallacy_core::{AnchorError, GatewayError, ParseError, ProbeError, PromptError, StoreError};
use serde::Serialize;

/// Uniform JSON error body: `{"code": ..., "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Envelope<'a> {
    code: &'a str,
    message: &'a str,
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
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Envelope {
            code: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "llm_unavailable", e.to_string())
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "unparseable_completion", e.to_string())
    }
}

impl From<AnchorError> for ApiError {
    fn from(e: AnchorError) -> Self {
        match e {
            AnchorError::EmptyPart => Self::bad_request(e.to_string()),
            AnchorError::NotFound(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "anchor_failed", e.to_string()),
        }
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::AnchorMismatch => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "anchor_failed", e.to_string())
            }
            _ => Self::bad_request(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownHighlight(_) | StoreError::UnknownMessage(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            StoreError::EmptyBody | StoreError::MalformedKind(_) => Self::bad_request(e.to_string()),
            StoreError::Io(_) | StoreError::Encoding(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string())
            }
        }
    }
}

impl From<ProbeError> for ApiError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::EmptyQuery => Self::bad_request(e.to_string()),
            ProbeError::NoFindings => Self::new(StatusCode::NOT_FOUND, "no_findings", e.to_string()),
            ProbeError::Upstream(_) => Self::new(StatusCode::BAD_GATEWAY, "search_unavailable", e.to_string()),
            ProbeError::Gateway(g) => g.into(),
            ProbeError::Prompt(p) => p.into(),
            ProbeError::Parse(p) => p.into(),
        }
    }
}
