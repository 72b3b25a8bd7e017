use thiserror::Error;

/// Errors raised by the selection engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid action: cluster {0} is already selected or out of range")]
    InvalidAction(usize),
    #[error("episode finished: the state is already at its budget")]
    EpisodeFinished,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("reward unavailable: {0}")]
    RewardUnavailable(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("oracle lacks capability `{0}`")]
    Capability(&'static str),
    #[error("search space too large: {0}")]
    TooLarge(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("update rejected: {0}")]
    UpdateRejected(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that originate in the reward oracle.
    pub fn is_oracle_failure(&self) -> bool {
        matches!(self, Error::OracleFailure(_) | Error::RewardUnavailable(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
