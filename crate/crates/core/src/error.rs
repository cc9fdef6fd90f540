use crate::domain::{ArticleStatus, Event};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// Missing, unknown, or expired token.
    #[error("unauthorized")]
    Unauthorized,

    /// Bad credentials at login. Deliberately carries no detail.
    #[error("authentication failed")]
    Authentication,

    #[error("forbidden: {0}")]
    Forbidden(String),

    #[error("{functionality} is not supported in scenario {scenario}")]
    Capability {
        scenario: u8,
        functionality: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("illegal transition {event:?} from {from:?} in scenario {scenario}")]
    Transition {
        from: ArticleStatus,
        event: Event,
        scenario: u8,
    },

    #[error("policy violation: {0}")]
    Policy(String),

    #[error("write conflict, retry: {0}")]
    Retriable(String),

    /// A change would leave a dangling reference (e.g. deleting a used sub-field).
    #[error("referential integrity: {0}")]
    Referential(String),

    #[error("store integrity: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("storage error: {0}")]
    Storage(rusqlite::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Conflict(_) => "conflict",
            Error::NotFound(_) => "not_found",
            Error::Unauthorized => "unauthorized",
            Error::Authentication => "authentication_failed",
            Error::Forbidden(_) => "forbidden",
            Error::Capability { .. } => "capability_unsupported",
            Error::State(_) => "invalid_state",
            Error::Transition { .. } => "illegal_transition",
            Error::Policy(_) => "policy",
            Error::Retriable(_) => "retriable",
            Error::Referential(_) => "referential_integrity",
            Error::Integrity(_) => "integrity",
            Error::Config(_) => "config",
            Error::Storage(_) | Error::Io(_) | Error::Json(_) => "internal",
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }
}

impl From<rusqlite::Error> for Error {
    fn from(err: rusqlite::Error) -> Self {
        use rusqlite::ErrorCode;
        match err.sqlite_error_code() {
            Some(ErrorCode::DatabaseBusy) | Some(ErrorCode::DatabaseLocked) => {
                Error::Retriable(err.to_string())
            }
            Some(ErrorCode::NotADatabase) | Some(ErrorCode::DatabaseCorrupt) => {
                Error::Integrity(err.to_string())
            }
            _ => Error::Storage(err),
        }
    }
}
