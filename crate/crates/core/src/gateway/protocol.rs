//! Wire protocol between clients and the gateway.
//!
//! Each frame is one JSON object. Client frames carry an `action` tag and a
//! `payload`; server frames carry a `type` tag and a `payload`. Both carry a
//! mandatory protocol version `v`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::affinity::UserId;
use crate::session::{
    Answers, ChatMessage, EditOperation, EditRequest, LeaderboardEntry, Phase, ProfileView,
    RatingForm, RosterEntry, TeamId,
};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub v: u32,
    pub session: String,
    /// Credential issued on registration; absent only on `register`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<u64>,
    #[serde(flatten)]
    pub action: ClientAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum ClientAction {
    Register {
        username: String,
    },
    /// Rebinds a reconnected client and re-sends everything after
    /// `last_server_order`.
    Resume {
        #[serde(default)]
        last_server_order: u64,
    },
    SubmitQuestionnaire {
        answers: Answers,
    },
    SubmitSample {
        text: String,
    },
    SubmitBallot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        previous_teammate: Option<UserId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stay_with_previous: Option<bool>,
        #[serde(default)]
        chosen: BTreeSet<UserId>,
    },
    EditOp {
        team: TeamId,
        #[serde(flatten)]
        edit: EditRequest,
    },
    Chat {
        team: TeamId,
        text: String,
    },
    SubmitRating(RatingForm),
    SubmitStoryVote {
        team: TeamId,
    },
    Leave,
}

impl ClientAction {
    pub fn name(&self) -> &'static str {
        match self {
            ClientAction::Register { .. } => "register",
            ClientAction::Resume { .. } => "resume",
            ClientAction::SubmitQuestionnaire { .. } => "submit_questionnaire",
            ClientAction::SubmitSample { .. } => "submit_sample",
            ClientAction::SubmitBallot { .. } => "submit_ballot",
            ClientAction::EditOp { .. } => "edit_op",
            ClientAction::Chat { .. } => "chat",
            ClientAction::SubmitRating(_) => "submit_rating",
            ClientAction::SubmitStoryVote { .. } => "submit_story_vote",
            ClientAction::Leave => "leave",
        }
    }
}

/// One frame sent to a client. `server_order` numbers the frames of one
/// participant's stream from 1; frames outside a stream (errors before
/// authentication) carry 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerEvent {
    pub v: u32,
    pub session: String,
    pub server_order: u64,
    #[serde(flatten)]
    pub body: ServerEventBody,
}

impl ServerEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server events always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RosterStatus {
    Waiting,
    Admitted,
    Excluded,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStory {
    pub team: TeamId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerEventBody {
    Registered {
        user: UserId,
        username: String,
        token: String,
    },
    /// The input was accepted and logged as record `log_seq`.
    Ack {
        action: String,
        log_seq: u64,
    },
    PhaseEntered {
        phase: Phase,
        round: u32,
        rounds: u32,
        deadline_ms: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        main_story: Option<String>,
    },
    RosterUpdate {
        status: RosterStatus,
        registered: usize,
        batch_min: usize,
        batch_max: usize,
        roster: Vec<RosterEntry>,
    },
    ProfileViews {
        round: u32,
        previous_teammates: Vec<UserId>,
        views: Vec<ProfileView>,
    },
    TeamsFormed {
        round: u32,
        team: TeamId,
        members: Vec<UserId>,
    },
    TextState {
        team: TeamId,
        version: usize,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        op: Option<EditOperation>,
    },
    ChatDelivered {
        message: ChatMessage,
    },
    CandidateStories {
        round: u32,
        stories: Vec<CandidateStory>,
    },
    Reminder {
        remaining_ms: u64,
    },
    WinnerAnnounced {
        round: u32,
        team: TeamId,
        members: Vec<UserId>,
        counts: Vec<u32>,
        fragment: String,
        main_story: String,
    },
    Leaderboard {
        entries: Vec<LeaderboardEntry>,
        final_story: String,
    },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<String>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Change;

    #[test]
    fn edit_frames_flatten_the_change() {
        let json = r#"{"v":1,"session":"s1","token":"t","action":"edit_op",
            "payload":{"team":0,"base_version":3,"kind":"insert","position":2,"text":"hi"}}"#;
        let msg: ClientMessage = serde_json::from_str(json).unwrap();
        assert_eq!(
            msg.action,
            ClientAction::EditOp {
                team: 0,
                edit: EditRequest {
                    base_version: 3,
                    change: Change::Insert {
                        position: 2,
                        text: "hi".into()
                    }
                }
            }
        );
        let back: ClientMessage = serde_json::from_str(&serde_json::to_string(&msg).unwrap()).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn version_is_mandatory() {
        let json = r#"{"session":"s1","action":"leave"}"#;
        assert!(serde_json::from_str::<ClientMessage>(json).is_err());
        let json = r#"{"v":1,"session":"s1","action":"leave"}"#;
        assert_eq!(
            serde_json::from_str::<ClientMessage>(json).unwrap().action,
            ClientAction::Leave
        );
    }

    #[test]
    fn server_frames_are_type_tagged() {
        let ev = ServerEvent {
            v: PROTOCOL_VERSION,
            session: "s1".into(),
            server_order: 4,
            body: ServerEventBody::Reminder { remaining_ms: 30_000 },
        };
        assert_eq!(
            ev.to_json(),
            r#"{"v":1,"session":"s1","server_order":4,"type":"reminder","payload":{"remaining_ms":30000}}"#
        );
    }
}
