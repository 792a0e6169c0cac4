//! Append-only session log records.
//!
//! One JSON object per line. Every record carries the envelope fields
//! (`v`, `seq`, `session`, `round`, `phase`, `at_ms`) plus a `type` tag and a
//! `payload`. Records are either causes (participant inputs, timer-driven
//! phase closes and reminders) or consequences the engine derives from them;
//! replay feeds the causes to a fresh engine and checks the consequences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    Answers, ChatMessage, EditOperation, EditRequest, LeaderboardEntry, PeerRating, Phase,
    RatingForm, RosterEntry, SessionConfig, TeamId,
};
use crate::affinity::{PreferenceBallot, TeamAssignment, UserId};

pub const LOG_VERSION: u32 = 1;

/// A participant input as the engine sees it, after the gateway has
/// authenticated the sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Input {
    SubmitQuestionnaire {
        user: UserId,
        answers: Answers,
    },
    SubmitSample {
        user: UserId,
        text: String,
    },
    SubmitBallot {
        user: UserId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        previous_teammate: Option<UserId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stay_with_previous: Option<bool>,
        #[serde(default)]
        chosen: BTreeSet<UserId>,
    },
    EditOp {
        user: UserId,
        team: TeamId,
        edit: EditRequest,
    },
    Chat {
        user: UserId,
        team: TeamId,
        text: String,
    },
    SubmitRating {
        user: UserId,
        rating: RatingForm,
    },
    SubmitStoryVote {
        user: UserId,
        team: TeamId,
    },
    Depart {
        user: UserId,
    },
}

impl Input {
    pub fn user(&self) -> &UserId {
        match self {
            Input::SubmitQuestionnaire { user, .. }
            | Input::SubmitSample { user, .. }
            | Input::SubmitBallot { user, .. }
            | Input::EditOp { user, .. }
            | Input::Chat { user, .. }
            | Input::SubmitRating { user, .. }
            | Input::SubmitStoryVote { user, .. }
            | Input::Depart { user } => user,
        }
    }

    pub fn action(&self) -> &'static str {
        match self {
            Input::SubmitQuestionnaire { .. } => "submit_questionnaire",
            Input::SubmitSample { .. } => "submit_sample",
            Input::SubmitBallot { .. } => "submit_ballot",
            Input::EditOp { .. } => "edit_op",
            Input::Chat { .. } => "chat",
            Input::SubmitRating { .. } => "submit_rating",
            Input::SubmitStoryVote { .. } => "submit_story_vote",
            Input::Depart { .. } => "depart",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Deadline,
    /// Every active participant submitted.
    Complete,
    /// Advanced explicitly by the host.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormationMethod {
    /// Greedy matching over the round's affinity graph.
    Greedy,
    /// The seeded round-one random assignment.
    FixedRandom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionStarted {
        config: SessionConfig,
        roster: Vec<RosterEntry>,
        excluded: Vec<RosterEntry>,
    },
    PhaseClosed {
        phase: Phase,
        reason: CloseReason,
    },
    PhaseEntered {
        phase: Phase,
        deadline_ms: Option<u64>,
    },
    Reminder {
        remaining_ms: u64,
    },
    DemographicsSubmitted {
        user: UserId,
        answers: Answers,
    },
    SampleSubmitted {
        user: UserId,
        text: String,
    },
    BallotSubmitted {
        ballot: PreferenceBallot,
    },
    BallotsClosed {
        ballots: Vec<PreferenceBallot>,
        defaulted: Vec<UserId>,
        /// False when the condition ignores ballots.
        used: bool,
    },
    TeamsFormed {
        method: FormationMethod,
        seed: u64,
        assignment: TeamAssignment,
    },
    EditApplied {
        request: EditRequest,
        op: EditOperation,
    },
    ChatPosted {
        message: ChatMessage,
    },
    RatingSubmitted {
        rating: PeerRating,
        replaced: bool,
    },
    StoryVoteSubmitted {
        voter: UserId,
        team: TeamId,
        replaced: bool,
    },
    VotesTallied {
        counts: Vec<u32>,
        winner: TeamId,
        tied: Vec<TeamId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        abstention_tie: bool,
    },
    StoryAppended {
        team: TeamId,
        fragment: String,
        empty: bool,
    },
    RewardsSettled {
        team: TeamId,
        members: Vec<UserId>,
        bonus: u64,
    },
    QuestionnaireSubmitted {
        user: UserId,
        answers: Answers,
    },
    UserDeparted {
        user: UserId,
    },
    Rejected {
        input: Input,
        code: String,
        reason: String,
    },
    SessionFinalized {
        leaderboard: Vec<LeaderboardEntry>,
        final_story: String,
    },
}

impl Event {
    pub fn type_name(&self) -> &'static str {
        match self {
            Event::SessionStarted { .. } => "session_started",
            Event::PhaseClosed { .. } => "phase_closed",
            Event::PhaseEntered { .. } => "phase_entered",
            Event::Reminder { .. } => "reminder",
            Event::DemographicsSubmitted { .. } => "demographics_submitted",
            Event::SampleSubmitted { .. } => "sample_submitted",
            Event::BallotSubmitted { .. } => "ballot_submitted",
            Event::BallotsClosed { .. } => "ballots_closed",
            Event::TeamsFormed { .. } => "teams_formed",
            Event::EditApplied { .. } => "edit_applied",
            Event::ChatPosted { .. } => "chat_posted",
            Event::RatingSubmitted { .. } => "rating_submitted",
            Event::StoryVoteSubmitted { .. } => "story_vote_submitted",
            Event::VotesTallied { .. } => "votes_tallied",
            Event::StoryAppended { .. } => "story_appended",
            Event::RewardsSettled { .. } => "rewards_settled",
            Event::QuestionnaireSubmitted { .. } => "questionnaire_submitted",
            Event::UserDeparted { .. } => "user_departed",
            Event::Rejected { .. } => "rejected",
            Event::SessionFinalized { .. } => "session_finalized",
        }
    }

    /// The participant input this record echoes, if it is an input record.
    pub fn as_input(&self) -> Option<Input> {
        Some(match self {
            Event::DemographicsSubmitted { user, answers }
            | Event::QuestionnaireSubmitted { user, answers } => Input::SubmitQuestionnaire {
                user: user.clone(),
                answers: answers.clone(),
            },
            Event::SampleSubmitted { user, text } => Input::SubmitSample {
                user: user.clone(),
                text: text.clone(),
            },
            Event::BallotSubmitted { ballot } => Input::SubmitBallot {
                user: ballot.voter.clone(),
                previous_teammate: ballot.previous_teammate.clone(),
                stay_with_previous: ballot.stay_with_previous,
                chosen: ballot.chosen.clone(),
            },
            Event::EditApplied { request, op } => Input::EditOp {
                user: op.author.clone(),
                team: op.team,
                edit: request.clone(),
            },
            Event::ChatPosted { message } => Input::Chat {
                user: message.author.clone(),
                team: message.team,
                text: message.text.clone(),
            },
            Event::RatingSubmitted { rating, .. } => Input::SubmitRating {
                user: rating.rater.clone(),
                rating: rating.form(),
            },
            Event::StoryVoteSubmitted { voter, team, .. } => Input::SubmitStoryVote {
                user: voter.clone(),
                team: *team,
            },
            Event::UserDeparted { user } => Input::Depart { user: user.clone() },
            Event::Rejected { input, .. } => input.clone(),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub v: u32,
    pub seq: u64,
    pub session: String,
    pub round: u32,
    pub phase: Phase,
    pub at_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Parses newline-delimited records, skipping blank lines.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LogRecord::from_line(l).map_err(|e| (i + 1, e)))
        .collect()
}

pub fn write_log(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}
