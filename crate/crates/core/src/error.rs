use thiserror::Error;

pub type Result<T> = std::result::Result<T, RldError>;

#[derive(Debug, Error)]
pub enum RldError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation failed at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Domain(String),

    #[error("horizon {horizon} h outside forecast curve range [{min}, {max}]")]
    HorizonOutOfRange { horizon: f64, min: f64, max: f64 },

    #[error("degenerate prices: {0}")]
    DegeneratePrice(String),

    #[error("event has zero probability: {0}")]
    ZeroProbability(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("policy `{policy}` failed: {source}")]
    Policy {
        policy: String,
        #[source]
        source: Box<RldError>,
    },
}

impl RldError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        RldError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by a numerical engine.
    pub fn is_validation(&self) -> bool {
        match self {
            RldError::Io { .. } | RldError::Parse { .. } | RldError::Validation { .. } => true,
            RldError::Policy { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
