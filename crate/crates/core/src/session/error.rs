use thiserror::Error;

use super::Phase;
use crate::affinity::{AffinityError, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("lifecycle violation: {0}")]
    Lifecycle(String),
    #[error("{action} is not accepted during {phase}")]
    StalePhase { action: &'static str, phase: Phase },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Relationship(String),
    #[error("not authorized: {0}")]
    Authorization(String),
    #[error("{0} is not on the session roster")]
    NotOnRoster(UserId),
    #[error("{0} has left the session")]
    Departed(UserId),
    #[error("a participant's own profile is not a selection candidate")]
    SelfView,
    #[error("participants cannot vote for their own team's story")]
    SelfVote,
    #[error("rewards for round {0} were already settled")]
    AlreadySettled(u32),
    #[error("lobby timed out with {count} registrations, below the minimum of {min}")]
    BatchAborted { count: usize, min: usize },
    #[error(transparent)]
    Affinity(#[from] AffinityError),
}

impl SessionError {
    /// Stable machine-readable code carried in rejections.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Config(_) => "config",
            SessionError::Lifecycle(_) => "lifecycle",
            SessionError::StalePhase { .. } => "stale_phase",
            SessionError::Validation(_) => "validation",
            SessionError::Relationship(_) => "relationship",
            SessionError::Authorization(_) => "authorization",
            SessionError::NotOnRoster(_) => "not_on_roster",
            SessionError::Departed(_) => "departed",
            SessionError::SelfView => "self_view",
            SessionError::SelfVote => "self_vote",
            SessionError::AlreadySettled(_) => "already_settled",
            SessionError::BatchAborted { .. } => "batch_aborted",
            SessionError::Affinity(_) => "ballot",
        }
    }
}
