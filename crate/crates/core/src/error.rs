use thiserror::Error;

/// Errors surfaced by the pipeline, grouped by how the caller should react.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or request (bad flag values, empty datasets,
    /// cluster count larger than the sample count, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An API contract was violated (shape mismatch, non-finite input,
    /// evaluation outside the trained time range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A data file could not be parsed. `line` is 1-based.
    #[error("data error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numeric failure during simulation or training (NaN loss, velocity
    /// overflow).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
