//! Session orchestration: configuration, phases, the state machine, and the
//! event log it produces.

mod config;
mod engine;
mod error;
mod lobby;
mod log;
mod phase;
pub mod rules;
mod state;
mod text;

/// Index of a team within a round's assignment.
pub type TeamId = u32;

pub use config::{Condition, PhaseSchedule, SessionConfig, DEFAULT_SEED_STORY};
pub use engine::{FinalReport, Rejection, SessionEngine};
pub use error::SessionError;
pub use lobby::{gate_batch, GateDecision, Registration};
pub use log::{
    parse_log, write_log, CloseReason, Event, FormationMethod, Input, LogRecord, LOG_VERSION,
};
pub use phase::Phase;
pub use rules::{
    append_winning_story, build_profile_view, form_round_teams, settle_rewards, tally_story_votes,
};
pub use state::{
    mean_axis_rating, Answers, ChatMessage, Competency, LeaderboardEntry, ParticipantProfile,
    PeerRating, ProfileView, RatingForm, RosterEntry, RoundState, SessionState, StoryFragment,
};
pub use text::{Change, EditOperation, EditRequest, TeamText};
