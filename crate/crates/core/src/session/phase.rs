use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Condition, PhaseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Instructions,
    Demographics,
    WritingSample,
    TeammateSelection,
    Collaboration,
    PeerRating,
    StoryVoting,
    WinnerDisplay,
    FinalQuestionnaire,
    /// Terminal; the session is finalized.
    Leaderboard,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Instructions => "instructions",
            Phase::Demographics => "demographics",
            Phase::WritingSample => "writing_sample",
            Phase::TeammateSelection => "teammate_selection",
            Phase::Collaboration => "collaboration",
            Phase::PeerRating => "peer_rating",
            Phase::StoryVoting => "story_voting",
            Phase::WinnerDisplay => "winner_display",
            Phase::FinalQuestionnaire => "final_questionnaire",
            Phase::Leaderboard => "leaderboard",
        }
    }

    pub fn duration_ms(self, schedule: &PhaseSchedule) -> Option<u64> {
        Some(match self {
            Phase::Instructions => schedule.instructions_ms,
            Phase::Demographics => schedule.demographics_ms,
            Phase::WritingSample => schedule.writing_sample_ms,
            Phase::TeammateSelection => schedule.teammate_selection_ms,
            Phase::Collaboration => schedule.collaboration_ms,
            Phase::PeerRating => schedule.peer_rating_ms,
            Phase::StoryVoting => schedule.story_voting_ms,
            Phase::WinnerDisplay => schedule.winner_display_ms,
            Phase::FinalQuestionnaire => schedule.final_questionnaire_ms,
            Phase::Leaderboard => return None,
        })
    }

    /// The phase that follows this one. `round` is the round that is ending
    /// when leaving `WinnerDisplay`.
    pub fn successor(self, condition: Condition, round: u32, rounds: u32) -> Option<Phase> {
        let selection_or_collab = if condition.solicits_ballots() {
            Phase::TeammateSelection
        } else {
            Phase::Collaboration
        };
        Some(match self {
            Phase::Instructions => Phase::Demographics,
            Phase::Demographics => Phase::WritingSample,
            Phase::WritingSample => selection_or_collab,
            Phase::TeammateSelection => Phase::Collaboration,
            Phase::Collaboration => Phase::PeerRating,
            Phase::PeerRating => Phase::StoryVoting,
            Phase::StoryVoting => Phase::WinnerDisplay,
            Phase::WinnerDisplay if round < rounds => selection_or_collab,
            Phase::WinnerDisplay => Phase::FinalQuestionnaire,
            Phase::FinalQuestionnaire => Phase::Leaderboard,
            Phase::Leaderboard => return None,
        })
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk(condition: Condition, rounds: u32) -> Vec<Phase> {
        let mut out = vec![Phase::Instructions];
        let mut round = 1;
        while let Some(next) = out.last().unwrap().successor(condition, round, rounds) {
            if *out.last().unwrap() == Phase::WinnerDisplay {
                round += 1;
            }
            out.push(next);
        }
        out
    }

    #[test]
    fn no_agency_skips_selection() {
        let phases = walk(Condition::NoAgency, 3);
        assert!(!phases.contains(&Phase::TeammateSelection));
        assert_eq!(phases.iter().filter(|p| **p == Phase::Collaboration).count(), 3);
        assert_eq!(phases[3], Phase::Collaboration);
    }

    #[test]
    fn sot_selects_every_round() {
        let phases = walk(Condition::Sot, 3);
        assert_eq!(
            phases.iter().filter(|p| **p == Phase::TeammateSelection).count(),
            3
        );
        assert_eq!(phases.len(), 3 + 5 * 3 + 2);
        assert_eq!(&phases[phases.len() - 2..], &[Phase::FinalQuestionnaire, Phase::Leaderboard]);
    }
}
