use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("unsupported prior for {0}")]
    UnsupportedPrior(&'static str),
    #[error("iteration diverged at t = {t}")]
    Diverged { t: usize },
    #[error("message storage of {edges} edges exceeds the cap of {cap}")]
    ResourceLimit { edges: usize, cap: usize },
    #[error("missing history: {0}")]
    MissingHistory(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("all {0} replicates diverged")]
    AllReplicatesDiverged(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
