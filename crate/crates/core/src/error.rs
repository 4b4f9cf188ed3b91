use thiserror::Error;

use crate::types::EstimationDataset;

/// Failures reported by generator, oracle and similarity backends.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication rejected by {endpoint} (status {status})")]
    Auth { endpoint: String, status: u16 },
    #[error("transient failure after {attempts} attempt(s): {message}")]
    Retriable { attempts: u32, message: String },
    #[error("backend does not report `{field}`")]
    MissingCapability { field: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unknown prompt `{0}`")]
    UnknownPrompt(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// True for failures that may succeed if the call is repeated later.
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Retriable { .. })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hypothesis K = {k} is impossible with {k_obs} observed meanings")]
    ImpossibleHypothesis { k: usize, k_obs: usize },
    #[error("density is not finite at a boundary point")]
    NonFiniteDensity,
    #[error("every hypothesis has zero evidence")]
    ZeroEvidence,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    /// A backend failed in the middle of an adaptive run; the samples
    /// gathered so far are handed back so the caller may resume or report.
    #[error("estimation interrupted after {} sample(s): {source}", .partial.raw_count())]
    Interrupted {
        source: BackendError,
        partial: Box<EstimationDataset>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn is_retriable(&self) -> bool {
        match self {
            Error::Backend(e) | Error::Interrupted { source: e, .. } => e.is_retriable(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
