use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge (achieved tolerance {achieved:.3e})")]
    Convergence { what: &'static str, achieved: f64 },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampling failure after {iterations} iterations: {detail}")]
    SamplingFailure { iterations: usize, detail: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
