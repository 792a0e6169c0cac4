//! Team stability against wins, and selection votes toward prior winners.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{session_meta, MetricsError};
use crate::affinity::{encode_ballot, PreferenceBallot, UserId};
use crate::session::{Event, LogRecord};

/// Teams grouped by how many rounds the exact same members played together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CohortRow {
    pub rounds_together: u32,
    pub teams: usize,
    pub wins: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TeamStint {
    pub session: String,
    /// Space-separated member ids.
    pub members: String,
    pub rounds_together: u32,
    pub wins: u32,
}

/// Selection votes and ballot weight received in one round, split by
/// whether the target was on the previous round's winning team.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VoteRow {
    pub round: u32,
    pub winners: usize,
    pub non_winners: usize,
    pub winner_votes: u64,
    pub non_winner_votes: u64,
    pub winner_mean_votes: Option<f64>,
    pub non_winner_mean_votes: Option<f64>,
    pub winner_weight: u64,
    pub winner_weight_pairs: u64,
    pub non_winner_weight: u64,
    pub non_winner_weight_pairs: u64,
    pub winner_mean_weight: Option<f64>,
    pub non_winner_mean_weight: Option<f64>,
}

impl VoteRow {
    fn finish(&mut self) {
        let mean = |sum: u64, n: u64| (n > 0).then(|| sum as f64 / n as f64);
        self.winner_mean_votes = mean(self.winner_votes, self.winners as u64);
        self.non_winner_mean_votes = mean(self.non_winner_votes, self.non_winners as u64);
        self.winner_mean_weight = mean(self.winner_weight, self.winner_weight_pairs);
        self.non_winner_mean_weight = mean(self.non_winner_weight, self.non_winner_weight_pairs);
    }

    /// True when prior winners received strictly more votes on average.
    pub fn winners_ahead(&self) -> bool {
        matches!(
            (self.winner_mean_votes, self.non_winner_mean_votes),
            (Some(w), Some(o)) if w > o
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StabilityWinTable {
    pub cohorts: Vec<CohortRow>,
    pub teams: Vec<TeamStint>,
    pub rounds_analyzed: u32,
    pub vote_concentration: Vec<VoteRow>,
    /// Sessions whose log ends before finalization.
    pub partial_sessions: Vec<String>,
}

impl StabilityWinTable {
    pub fn is_partial(&self) -> bool {
        !self.partial_sessions.is_empty()
    }

    pub fn vote_row(&self, round: u32) -> Option<&VoteRow> {
        self.vote_concentration.iter().find(|r| r.round == round)
    }
}

/// Whether a submitted ballot counts as a selection vote for `target`.
fn votes_for(ballot: &PreferenceBallot, target: &UserId) -> bool {
    ballot.chosen.contains(target)
        || (ballot.previous_teammate.as_ref() == Some(target) && ballot.stay_with_previous == Some(true))
}

pub fn stability_win_table<L: AsRef<[LogRecord]>>(
    logs: &[L],
) -> Result<StabilityWinTable, MetricsError> {
    let mut table = StabilityWinTable::default();
    let mut cohorts: BTreeMap<u32, (usize, u32)> = BTreeMap::new();
    let mut votes: BTreeMap<u32, VoteRow> = BTreeMap::new();

    for log in logs {
        let log = log.as_ref();
        let meta = session_meta(log)?;
        if !meta.finalized {
            table.partial_sessions.push(meta.session.clone());
        }
        let mut teams: BTreeMap<u32, Vec<BTreeSet<UserId>>> = BTreeMap::new();
        let mut winners: BTreeMap<u32, usize> = BTreeMap::new();
        for r in log {
            match &r.event {
                Event::TeamsFormed { assignment, .. } => {
                    let sets = assignment
                        .teams
                        .iter()
                        .map(|t| t.iter().cloned().collect())
                        .collect();
                    teams.insert(r.round, sets);
                }
                Event::VotesTallied { winner, .. } => {
                    winners.insert(r.round, *winner as usize);
                }
                _ => {}
            }
        }

        let mut stints: BTreeMap<BTreeSet<UserId>, (u32, u32)> = BTreeMap::new();
        for sets in teams.values() {
            for set in sets {
                stints.entry(set.clone()).or_default().0 += 1;
            }
        }
        for (round, w) in &winners {
            let Some(set) = teams.get(round).and_then(|t| t.get(*w)) else {
                return Err(MetricsError::Inconsistent(format!(
                    "{}: round {round} winner {w} has no team",
                    meta.session
                )));
            };
            stints.get_mut(set).expect("formed teams are counted").1 += 1;
            table.rounds_analyzed += 1;
        }
        for (set, (rounds, wins)) in stints {
            let c = cohorts.entry(rounds).or_default();
            c.0 += 1;
            c.1 += wins;
            table.teams.push(TeamStint {
                session: meta.session.clone(),
                members: set.iter().map(|u| u.as_str()).collect::<Vec<_>>().join(" "),
                rounds_together: rounds,
                wins,
            });
        }

        for r in log {
            let Event::BallotsClosed {
                ballots, defaulted, ..
            } = &r.event
            else {
                continue;
            };
            let Some(prior) = r
                .round
                .checked_sub(1)
                .and_then(|p| Some(&teams.get(&p)?[*winners.get(&p)?]))
            else {
                continue;
            };
            let roster: BTreeSet<UserId> = ballots.iter().map(|b| b.voter.clone()).collect();
            let row = votes.entry(r.round).or_insert_with(|| VoteRow {
                round: r.round,
                ..VoteRow::default()
            });
            let cast: Vec<&PreferenceBallot> =
                ballots.iter().filter(|b| !defaulted.contains(&b.voter)).collect();
            for target in &roster {
                let received = cast.iter().filter(|b| votes_for(b, target)).count() as u64;
                if prior.contains(target) {
                    row.winners += 1;
                    row.winner_votes += received;
                } else {
                    row.non_winners += 1;
                    row.non_winner_votes += received;
                }
            }
            for b in cast {
                let vector = encode_ballot(b, &roster)?;
                for (target, w) in &vector.weights {
                    if prior.contains(target) {
                        row.winner_weight += u64::from(w.value());
                        row.winner_weight_pairs += 1;
                    } else {
                        row.non_winner_weight += u64::from(w.value());
                        row.non_winner_weight_pairs += 1;
                    }
                }
            }
        }
    }

    table.cohorts = cohorts
        .into_iter()
        .map(|(rounds_together, (teams, wins))| CohortRow {
            rounds_together,
            teams,
            wins,
        })
        .collect();
    table.vote_concentration = votes
        .into_values()
        .map(|mut r| {
            r.finish();
            r
        })
        .collect();
    Ok(table)
}
