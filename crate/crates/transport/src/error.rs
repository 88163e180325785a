use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad frame: {0}")]
    Frame(String),
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] fedmerdel_core::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("node {node} reported: {message}")]
    Remote { node: String, message: String },
    #[error("collected {got} summaries, need at least {need}")]
    PartialCollection { got: usize, need: usize },
}

impl TransportError {
    /// Process exit code for the CLI: 3 for partial collection, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::PartialCollection { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = TransportError> = std::result::Result<T, E>;
