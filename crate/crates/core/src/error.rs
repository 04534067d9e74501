use thiserror::Error;

/// Errors raised by the gait pipeline and its evaluation tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("direction of movement is ambiguous (eigenvalue ratio {ratio:.3} below {threshold})")]
    AmbiguousDirection { ratio: f64, threshold: f64 },

    #[error("no cadence peak found in the stride-lag band")]
    NoCadence,

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("sampler diagnostics failed: {message} ({guidance})")]
    Diagnostics { message: String, guidance: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
