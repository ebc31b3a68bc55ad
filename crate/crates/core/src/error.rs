use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Rejection filtering kept too few particles to refit a Gaussian.
    #[error("update failed: {accepted} of {proposed} particles accepted")]
    UpdateFailure { accepted: usize, proposed: usize },

    /// Exact Bayes update produced a posterior that is zero everywhere.
    #[error("degenerate update: posterior vanishes on the grid")]
    DegenerateUpdate,

    #[error("fit unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row {row}: {message}")]
    Load { row: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
