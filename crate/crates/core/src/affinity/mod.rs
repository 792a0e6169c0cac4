//! Teammate-preference encoding, the affinity graph, and team partitioning.
//!
//! Everything in this module is a pure function of its inputs (plus an
//! explicit seed where ties are broken), so it can be called from any thread
//! and re-run from a session log to verify the teams a session formed.

mod ballot;
mod graph;
mod matching;
mod weight;

pub use ballot::{encode_ballot, DirectedWeightVector, PreferenceBallot, PreferenceWeight};
pub use graph::{build_affinity_graph, AffinityGraph, Edge};
pub use matching::{
    brute_force_assign, enumerate_candidate_teams, greedy_assign, CandidateTeam, Residual,
    TeamAssignment, BRUTE_FORCE_MAX_ROSTER,
};
pub use weight::{EdgeWeight, Score};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque participant identifier, unique within one session roster.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(value: impl Into<String>) -> Self {
        UserId(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffinityError {
    #[error("ballot rejected: user {0} is not on the roster")]
    UnknownUser(UserId),
    #[error("ballot rejected for {voter}: {reason}")]
    InvalidBallot { voter: UserId, reason: String },
    #[error("duplicate weight vector for voter {0}")]
    DuplicateVector(UserId),
    #[error("no weight vector for roster member {0}")]
    MissingVector(UserId),
    #[error("weight vector for {voter} is malformed: {reason}")]
    InvalidVector { voter: UserId, reason: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("team size must be at least 2, got {0}")]
    TeamSizeTooSmall(usize),
    #[error("team size {k} exceeds roster size {n}")]
    TeamLargerThanRoster { k: usize, n: usize },
    #[error("roster of {n} exceeds the exhaustive-search limit of {max}")]
    RosterTooLarge { n: usize, max: usize },
    #[error("roster of {n} cannot be split into teams of {k}")]
    Indivisible { n: usize, k: usize },
    #[error("{count} candidate teams exceeds the enumeration limit")]
    TooManyCandidates { count: u128 },
}

pub type Result<T, E = AffinityError> = std::result::Result<T, E>;
