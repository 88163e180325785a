use thiserror::Error;

/// Errors raised across the model, fitting, federation and data layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the function (e.g. non-positive Dirichlet entry).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated a documented precondition (shapes, counts, indices).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerical breakdown that should be impossible under the stated preconditions.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Variational parameters sit below their prior, so they cannot come from an M step.
    #[error("inconsistent state: {0}")]
    Inconsistent(String),

    /// Batch summaries were produced under different priors.
    #[error("incompatible priors: expected fingerprint {expected}, found {found}")]
    IncompatiblePriors { expected: String, found: String },

    /// Batch summaries disagree on the data schema (variable count or cardinalities).
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// Malformed input data.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("unsupported summary version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
