use ris_core::judging::JudgingError;
use ris_core::trace::PromptError;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("still rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("invalid response from {endpoint}: {message}")]
    InvalidResponse { endpoint: String, message: String },
    #[error("invalid judge configuration: {0}")]
    Config(String),
    #[error(transparent)]
    MissingContext(#[from] PromptError),
    #[error(transparent)]
    Judging(#[from] JudgingError),
    #[error("verdict cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl GatewayError {
    /// True for errors that came from the wire rather than from bad input.
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. } | GatewayError::RateLimited { .. })
    }
}
