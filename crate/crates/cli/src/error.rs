use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tipping_core::bifurcation::BifurcationError;
use tipping_core::dataset::DatasetError;
use tipping_core::dsl::DslError;
use tipping_core::fourbox::FourBoxError;
use tipping_core::tipgan::GanError;

/// Wire form of every error, on stderr for the CLI and as the body for HTTP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), detail } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_error", message, Value::Null)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"), json!({ "kind": what, "id": id }))
    }

    pub fn conflict(message: impl Into<String>, detail: Value) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message, detail)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message, Value::Null)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.body).expect("error body serializes")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.body.code, self.body.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<DslError> for ApiError {
    fn from(e: DslError) -> Self {
        let message = e.to_string();
        let (status, detail) = match &e {
            DslError::ParseError { position, expected, found } => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "position": position, "expected": expected, "found": found }))
            }
            DslError::UnknownParameter { name, position, suggestion } => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "name": name, "position": position, "suggestion": suggestion }))
            }
            DslError::DuplicateParameter { name, position } => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "name": name, "position": position }))
            }
            DslError::UnrecognizedTemplate { nearest, detail } => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "nearest_template": nearest, "reason": detail }))
            }
            DslError::InvalidValue(_) | DslError::Model(_) => (StatusCode::BAD_REQUEST, Value::Null),
        };
        Self::new(status, e.code(), message, detail)
    }
}

impl From<FourBoxError> for ApiError {
    fn from(e: FourBoxError) -> Self {
        match e {
            FourBoxError::NumericalBlowup { .. } | FourBoxError::DegenerateState(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "model_failure", e.to_string(), Value::Null)
            }
            _ => Self::new(StatusCode::BAD_REQUEST, "validation_error", e.to_string(), Value::Null),
        }
    }
}

impl From<BifurcationError> for ApiError {
    fn from(e: BifurcationError) -> Self {
        match e {
            BifurcationError::Model(m) => m.into(),
            BifurcationError::InvalidArgument(_) => Self::bad_request(e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "bifurcation_failure", e.to_string(), Value::Null),
        }
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Model(m) => m.into(),
            DatasetError::InvalidArgument(_) | DatasetError::DegenerateSplit { .. } => Self::bad_request(e.to_string()),
            DatasetError::DigestMismatch { .. } | DatasetError::MalformedRow { .. } | DatasetError::Manifest(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "corrupt_dataset", e.to_string(), Value::Null)
            }
            DatasetError::Io(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<GanError> for ApiError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Model(m) => m.into(),
            GanError::InvalidConfig(_) | GanError::DegenerateData(_) => Self::bad_request(e.to_string()),
            GanError::Io(_) => Self::internal(e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "training_failure", e.to_string(), Value::Null),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}
