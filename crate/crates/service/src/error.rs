use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use sourcelens_core::embeddings::EmbeddingError;
use sourcelens_core::filter::FilterError;
use sourcelens_core::imagesim::ImageError;

/// A 4xx answer. The body is `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body { error: Detail { code: self.code, message: &self.message } };
        (self.status, Json(body)).into_response()
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        let code = match e {
            FilterError::UnknownAccount(_) => "unknown_account",
            FilterError::UnknownEntity(_) => "unknown_entity",
            FilterError::UnknownWord(_) => "unknown_word",
        };
        ApiError::not_found(code, e.to_string())
    }
}

impl From<ImageError> for ApiError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::UnknownImage(_) => ApiError::not_found("unknown_image", e.to_string()),
            other => ApiError::bad_request(other.to_string()),
        }
    }
}

impl From<EmbeddingError> for ApiError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::MissingFromBoth(_) | EmbeddingError::OutOfVocabulary { .. } => {
                ApiError::not_found("unknown_word", e.to_string())
            }
            other => ApiError::bad_request(other.to_string()),
        }
    }
}
