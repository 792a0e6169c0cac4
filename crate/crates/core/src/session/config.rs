use serde::{Deserialize, Serialize};

use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Ballots drive the greedy matcher every round.
    Sot,
    /// Ballots are collected and logged but teams never change.
    Placebo,
    /// No selection stage; teams fixed at round one.
    NoAgency,
}

impl Condition {
    pub fn solicits_ballots(self) -> bool {
        !matches!(self, Condition::NoAgency)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Sot => "sot",
            Condition::Placebo => "placebo",
            Condition::NoAgency => "no_agency",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sot" => Ok(Condition::Sot),
            "placebo" => Ok(Condition::Placebo),
            "no_agency" | "noagency" => Ok(Condition::NoAgency),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

/// Phase durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSchedule {
    pub instructions_ms: u64,
    pub demographics_ms: u64,
    pub writing_sample_ms: u64,
    pub teammate_selection_ms: u64,
    pub collaboration_ms: u64,
    /// How long before the end of collaboration the wrap-up reminder fires.
    pub wrapup_reminder_offset_ms: u64,
    pub peer_rating_ms: u64,
    pub story_voting_ms: u64,
    pub winner_display_ms: u64,
    pub final_questionnaire_ms: u64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        PhaseSchedule {
            instructions_ms: 75_000,
            demographics_ms: 60_000,
            writing_sample_ms: 180_000,
            teammate_selection_ms: 120_000,
            collaboration_ms: 240_000,
            wrapup_reminder_offset_ms: 30_000,
            peer_rating_ms: 30_000,
            story_voting_ms: 90_000,
            winner_display_ms: 30_000,
            final_questionnaire_ms: 120_000,
        }
    }
}

impl PhaseSchedule {
    fn validate(&self) -> Result<(), SessionError> {
        let all = [
            ("instructions", self.instructions_ms),
            ("demographics", self.demographics_ms),
            ("writing_sample", self.writing_sample_ms),
            ("teammate_selection", self.teammate_selection_ms),
            ("collaboration", self.collaboration_ms),
            ("wrapup_reminder_offset", self.wrapup_reminder_offset_ms),
            ("peer_rating", self.peer_rating_ms),
            ("story_voting", self.story_voting_ms),
            ("winner_display", self.winner_display_ms),
            ("final_questionnaire", self.final_questionnaire_ms),
        ];
        if let Some((name, _)) = all.iter().find(|(_, d)| *d == 0) {
            return Err(SessionError::Config(format!("{name} duration must be positive")));
        }
        if self.wrapup_reminder_offset_ms >= self.collaboration_ms {
            return Err(SessionError::Config(
                "wrap-up reminder offset must be shorter than collaboration".into(),
            ));
        }
        Ok(())
    }
}

pub const DEFAULT_SEED_STORY: &str = "The lighthouse keeper found a sealed envelope on the \
    doorstep, addressed to someone who had left the island forty years ago. She opened it and \
    read the first line...";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub condition: Condition,
    pub batch_min: usize,
    pub batch_max: usize,
    pub rounds: u32,
    pub team_size: usize,
    pub base_reward: u64,
    pub win_bonus: u64,
    pub phase_schedule: PhaseSchedule,
    pub seed: u64,
    /// Lobby timeout, measured from the first registration.
    pub max_wait_ms: u64,
    /// Close a phase as soon as every active participant has submitted.
    pub advance_when_complete: bool,
    pub seed_story: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            condition: Condition::Sot,
            batch_min: 6,
            batch_max: 12,
            rounds: 3,
            team_size: 2,
            base_reward: 5,
            win_bonus: 5,
            phase_schedule: PhaseSchedule::default(),
            seed: 0,
            max_wait_ms: 300_000,
            advance_when_complete: false,
            seed_story: DEFAULT_SEED_STORY.to_owned(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let err = |m: &str| Err(SessionError::Config(m.to_owned()));
        if self.team_size < 2 {
            return err("team_size must be at least 2");
        }
        if self.batch_min < 2 * self.team_size {
            return err("batch_min must be at least twice the team size");
        }
        if self.team_size == 2 && (self.batch_min % 2 != 0 || self.batch_max % 2 != 0) {
            return err("batch bounds must be even for dyads");
        }
        if self.batch_max < self.batch_min {
            return err("batch_max must not be below batch_min");
        }
        if self.rounds == 0 {
            return err("rounds must be at least 1");
        }
        if self.max_wait_ms == 0 {
            return err("max_wait must be positive");
        }
        self.phase_schedule.validate()
    }

    /// Balance of someone who won every round.
    pub fn max_reward(&self) -> u64 {
        self.base_reward + self.rounds as u64 * self.win_bonus
    }
}
