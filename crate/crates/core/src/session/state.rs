use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Phase, SessionConfig, TeamId, TeamText};
use crate::affinity::{PreferenceBallot, Score, TeamAssignment, UserId};

/// Opaque questionnaire answers, keyed by question.
pub type Answers = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub user: UserId,
    pub username: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Competency {
    TaskCommitment,
    WorkStrategy,
    SkillSimilarity,
    PersonalValues,
}

impl Competency {
    pub const ALL: [Competency; 4] = [
        Competency::TaskCommitment,
        Competency::WorkStrategy,
        Competency::SkillSimilarity,
        Competency::PersonalValues,
    ];
}

/// Rating form as submitted by the rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingForm {
    pub ratee: UserId,
    pub skillfulness: u8,
    pub collaboration: u8,
    pub helpfulness: u8,
    pub own_helpfulness: u8,
    #[serde(default)]
    pub shared_competencies: BTreeSet<Competency>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerRating {
    pub rater: UserId,
    pub ratee: UserId,
    pub round: u32,
    pub skillfulness: u8,
    pub collaboration: u8,
    pub helpfulness: u8,
    pub own_helpfulness: u8,
    pub shared_competencies: BTreeSet<Competency>,
}

impl PeerRating {
    /// Sum of the three teammate axes.
    pub fn axis_sum(&self) -> u64 {
        self.skillfulness as u64 + self.collaboration as u64 + self.helpfulness as u64
    }

    pub fn form(&self) -> RatingForm {
        RatingForm {
            ratee: self.ratee.clone(),
            skillfulness: self.skillfulness,
            collaboration: self.collaboration,
            helpfulness: self.helpfulness,
            own_helpfulness: self.own_helpfulness,
            shared_competencies: self.shared_competencies.clone(),
        }
    }
}

/// Mean over the three teammate axes of every listed rating.
pub fn mean_axis_rating<'a>(ratings: impl IntoIterator<Item = &'a PeerRating>) -> Option<Score> {
    let (sum, count) = ratings
        .into_iter()
        .fold((0u64, 0u64), |(s, c), r| (s + r.axis_sum(), c + 1));
    (count > 0).then(|| Score::new(sum, 3 * count))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub user: UserId,
    pub username: String,
    pub demographics: Answers,
    pub writing_sample: Option<String>,
    pub ratings_received: Vec<PeerRating>,
    pub wins: u32,
    pub reward_balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub team: TeamId,
    pub author: UserId,
    pub text: String,
    pub server_order: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundState {
    pub index: u32,
    /// Ballots submitted during selection, keyed by voter.
    pub ballots: BTreeMap<UserId, PreferenceBallot>,
    /// Every active participant's effective ballot once selection closed,
    /// defaults included.
    pub closed_ballots: Vec<PreferenceBallot>,
    pub teams: Option<TeamAssignment>,
    pub shared_texts: Vec<TeamText>,
    pub chats: Vec<Vec<ChatMessage>>,
    pub ratings: Vec<PeerRating>,
    pub story_votes: BTreeMap<UserId, TeamId>,
    pub winner: Option<TeamId>,
}

impl RoundState {
    pub fn new(index: u32) -> Self {
        RoundState {
            index,
            ballots: BTreeMap::new(),
            closed_ballots: Vec::new(),
            teams: None,
            shared_texts: Vec::new(),
            chats: Vec::new(),
            ratings: Vec::new(),
            story_votes: BTreeMap::new(),
            winner: None,
        }
    }

    pub fn team_of(&self, user: &UserId) -> Option<TeamId> {
        self.teams.as_ref()?.team_of(user).map(|t| t as TeamId)
    }

    pub fn teammates_of(&self, user: &UserId) -> Vec<UserId> {
        self.teams
            .as_ref()
            .map(|t| t.teammates_of(user))
            .unwrap_or_default()
    }

    pub fn team_members(&self, team: TeamId) -> Option<&[UserId]> {
        self.teams
            .as_ref()?
            .teams
            .get(team as usize)
            .map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryFragment {
    pub round: u32,
    pub team: TeamId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub user: UserId,
    pub username: String,
    pub wins: u32,
    pub reward_balance: u64,
}

/// What one participant sees about a candidate teammate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileView {
    pub user: UserId,
    pub username: String,
    pub demographics: Answers,
    pub writing_sample: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub others_rating: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_rating: Option<Score>,
}

/// Authoritative record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub config: SessionConfig,
    pub roster: Vec<RosterEntry>,
    pub excluded: Vec<RosterEntry>,
    pub profiles: BTreeMap<UserId, ParticipantProfile>,
    pub departed: BTreeSet<UserId>,
    pub phase: Phase,
    pub phase_entered_ms: u64,
    pub deadline_ms: Option<u64>,
    pub reminder_due_ms: Option<u64>,
    /// Participants who submitted the current phase's single-shot input.
    pub phase_submissions: BTreeSet<UserId>,
    /// 1-based; setup phases belong to round 1.
    pub round: u32,
    pub rounds: Vec<RoundState>,
    pub main_story: String,
    pub fragments: Vec<StoryFragment>,
    /// Round-one random assignment reused by the fixed-team conditions.
    pub fixed_assignment: Option<TeamAssignment>,
    pub final_answers: BTreeMap<UserId, Answers>,
    pub settled_rounds: BTreeSet<u32>,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub next_seq: u64,
    pub finalized: bool,
}

impl SessionState {
    pub fn is_member(&self, user: &UserId) -> bool {
        self.profiles.contains_key(user)
    }

    pub fn is_active(&self, user: &UserId) -> bool {
        self.is_member(user) && !self.departed.contains(user)
    }

    /// Roster members who have not departed, in id order.
    pub fn active_users(&self) -> BTreeSet<UserId> {
        self.profiles
            .keys()
            .filter(|u| !self.departed.contains(*u))
            .cloned()
            .collect()
    }

    pub fn current_round(&self) -> &RoundState {
        &self.rounds[self.round as usize - 1]
    }

    pub(crate) fn current_round_mut(&mut self) -> &mut RoundState {
        let idx = self.round as usize - 1;
        &mut self.rounds[idx]
    }

    pub fn round_state(&self, round: u32) -> Option<&RoundState> {
        self.rounds.get((round as usize).checked_sub(1)?)
    }

    pub fn username(&self, user: &UserId) -> Option<&str> {
        self.profiles.get(user).map(|p| p.username.as_str())
    }

    /// Active teammates from the previous round, if there was one.
    pub fn previous_teammates(&self, user: &UserId) -> Vec<UserId> {
        if self.round < 2 {
            return Vec::new();
        }
        self.round_state(self.round - 1)
            .map(|r| r.teammates_of(user))
            .unwrap_or_default()
            .into_iter()
            .filter(|u| self.is_active(u))
            .collect()
    }

    /// Total of all reward balances.
    pub fn total_rewards(&self) -> u64 {
        self.profiles.values().map(|p| p.reward_balance).sum()
    }
}
