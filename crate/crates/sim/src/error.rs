use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Estimation(#[from] lavc::Error),
    #[error("{label}: replication {rep} (seed {seed}, stream {rep}) failed: {source}")]
    Replication {
        label: String,
        rep: usize,
        seed: u64,
        source: lavc::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl SimError {
    /// The underlying estimation error, if any.
    pub fn estimation_error(&self) -> Option<&lavc::Error> {
        match self {
            SimError::Estimation(e) | SimError::Replication { source: e, .. } => Some(e),
            _ => None,
        }
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;
