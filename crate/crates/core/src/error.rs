use thiserror::Error;

/// Library-wide error type. Messages carry enough context (dimensions,
/// offending row indices, file paths) to be actionable from a CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension constraint was violated (e.g. projector needs 0 < d < n).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// An argument is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Problem data is malformed (zero rows, non-finite entries, ...).
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// The problem was handed to a solver whose assumptions it violates.
    #[error("wrong solver: {0}")]
    WrongSolver(String),

    /// A quantity that must be positive for a bound to make sense was not.
    #[error("degenerate set: {0}")]
    DegenerateSet(String),

    /// A serialized artifact (instance JSON, projector file, CSV) is invalid.
    #[error("malformed data in {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
