//! Session rules that are pure functions of the state.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    mean_axis_rating, Condition, FormationMethod, LeaderboardEntry, ProfileView, SessionError,
    SessionState, StoryFragment, TeamId,
};
use crate::affinity::{
    build_affinity_graph, encode_ballot, greedy_assign, AffinityGraph, EdgeWeight,
    PreferenceBallot, TeamAssignment, UserId,
};
use crate::seed;

/// Separator placed between the main story and each appended fragment.
pub const STORY_SEPARATOR: &str = "\n\n";

/// Teams for the current round of `state`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formation {
    pub assignment: TeamAssignment,
    pub method: FormationMethod,
    pub seed: u64,
}

/// The seeded random partition used by the fixed-team conditions: greedy
/// selection over a uniform graph, so every tie is decided by the seed.
pub fn random_assignment(
    users: &BTreeSet<UserId>,
    k: usize,
    seed: u64,
) -> Result<TeamAssignment, SessionError> {
    if users.len() < k {
        return Ok(TeamAssignment {
            teams: if users.is_empty() {
                vec![]
            } else {
                vec![users.iter().cloned().collect()]
            },
            residual: None,
        });
    }
    let uniform = EdgeWeight::from_halves(2).expect("valid weight");
    let graph = AffinityGraph::from_fn(users.iter().cloned(), |_, _| uniform)?;
    Ok(greedy_assign(&graph, k, seed)?)
}

/// Greedy matching over the affinity graph of `ballots`, which must hold
/// exactly one ballot per active user.
pub fn sot_assignment(
    ballots: &[PreferenceBallot],
    active: &BTreeSet<UserId>,
    k: usize,
    seed: u64,
) -> Result<TeamAssignment, SessionError> {
    if active.len() < k {
        return random_assignment(active, k, seed);
    }
    let vectors = ballots
        .iter()
        .map(|b| encode_ballot(b, active))
        .collect::<Result<Vec<_>, _>>()?;
    let graph = build_affinity_graph(&vectors, active)?;
    Ok(greedy_assign(&graph, k, seed)?)
}

/// Removes departed members from the fixed assignment, dropping empty teams.
fn without_departed(fixed: &TeamAssignment, active: &BTreeSet<UserId>) -> TeamAssignment {
    let teams: Vec<Vec<UserId>> = fixed
        .teams
        .iter()
        .map(|t| t.iter().filter(|u| active.contains(*u)).cloned().collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect();
    let residual = if teams.len() == fixed.teams.len() {
        fixed.residual.clone()
    } else {
        None
    };
    TeamAssignment { teams, residual }
}

/// Forms the current round's teams.
///
/// SOT runs the greedy matcher on `ballots`; Placebo accepts ballots but
/// ignores them; both fixed-team conditions reuse the seeded round-one
/// random assignment.
pub fn form_round_teams(
    state: &SessionState,
    ballots: &[PreferenceBallot],
) -> Result<Formation, SessionError> {
    let active = state.active_users();
    let k = state.config.team_size;
    match state.config.condition {
        Condition::Sot if state.round >= 1 => {
            let s = seed::derive(state.config.seed, seed::purpose::MATCHING, state.round as u64);
            Ok(Formation {
                assignment: sot_assignment(ballots, &active, k, s)?,
                method: FormationMethod::Greedy,
                seed: s,
            })
        }
        _ => {
            let s = seed::derive(state.config.seed, seed::purpose::PAIRING, 0);
            let assignment = match &state.fixed_assignment {
                Some(fixed) => without_departed(fixed, &active),
                None => random_assignment(&active, k, s)?,
            };
            Ok(Formation {
                assignment,
                method: FormationMethod::FixedRandom,
                seed: s,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub counts: Vec<u32>,
    pub winner: TeamId,
    pub tied: Vec<TeamId>,
    pub seed: Option<u64>,
    pub abstention_tie: bool,
}

/// Picks the team with the most votes; ties (including the all-abstain
/// case) are broken by a seeded uniform draw among the tied teams.
pub fn tally_story_votes(
    votes: &BTreeMap<UserId, TeamId>,
    teams: &TeamAssignment,
    seed: u64,
) -> Result<Tally, SessionError> {
    if teams.teams.is_empty() {
        return Err(SessionError::Validation("no teams to vote for".into()));
    }
    let mut counts = vec![0u32; teams.teams.len()];
    for (voter, &team) in votes {
        let slot = counts
            .get_mut(team as usize)
            .ok_or_else(|| SessionError::Validation(format!("vote for unknown team {team}")))?;
        if teams.team_of(voter) == Some(team as usize) {
            return Err(SessionError::SelfVote);
        }
        *slot += 1;
    }
    let max = *counts.iter().max().expect("non-empty");
    let tied: Vec<TeamId> = (0..counts.len() as TeamId)
        .filter(|&t| counts[t as usize] == max)
        .collect();
    let (winner, seed) = if tied.len() == 1 {
        (tied[0], None)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (tied[rng.random_range(0..tied.len())], Some(seed))
    };
    Ok(Tally {
        counts,
        winner,
        tied: if seed.is_some() { tied } else { Vec::new() },
        seed,
        abstention_tie: votes.is_empty(),
    })
}

/// Appends the winning team's text to the main story. Returns the fragment
/// and whether it was empty.
pub fn append_winning_story(state: &mut SessionState, winner: TeamId) -> (String, bool) {
    let round = state.round;
    let fragment = state
        .current_round()
        .shared_texts
        .get(winner as usize)
        .map(|t| t.text.clone())
        .unwrap_or_default();
    state.main_story.push_str(STORY_SEPARATOR);
    state.main_story.push_str(&fragment);
    state.fragments.push(StoryFragment {
        round,
        team: winner,
        text: fragment.clone(),
    });
    let empty = fragment.trim().is_empty();
    (fragment, empty)
}

/// Credits one win and the bonus to every member of the winning team.
pub fn settle_rewards(
    state: &mut SessionState,
    winner: TeamId,
) -> Result<Vec<UserId>, SessionError> {
    let round = state.round;
    if state.settled_rounds.contains(&round) {
        return Err(SessionError::AlreadySettled(round));
    }
    let members = state
        .current_round()
        .team_members(winner)
        .ok_or_else(|| SessionError::Validation(format!("unknown team {winner}")))?
        .to_vec();
    let bonus = state.config.win_bonus;
    for m in &members {
        let p = state.profiles.get_mut(m).expect("team members are on the roster");
        p.wins += 1;
        p.reward_balance += bonus;
    }
    state.settled_rounds.insert(round);
    Ok(members)
}

/// Wins descending, then username ascending.
pub fn leaderboard(state: &SessionState) -> Vec<LeaderboardEntry> {
    let mut rows: Vec<_> = state.profiles.values().collect();
    rows.sort_by(|a, b| {
        b.wins
            .cmp(&a.wins)
            .then_with(|| a.username.cmp(&b.username))
            .then_with(|| a.user.cmp(&b.user))
    });
    rows.into_iter()
        .enumerate()
        .map(|(i, p)| LeaderboardEntry {
            rank: i + 1,
            user: p.user.clone(),
            username: p.username.clone(),
            wins: p.wins,
            reward_balance: p.reward_balance,
        })
        .collect()
}

/// The profile card `viewer` sees for `target`. Ratings appear from the
/// second round onward.
pub fn build_profile_view(
    state: &SessionState,
    viewer: &UserId,
    target: &UserId,
) -> Result<ProfileView, SessionError> {
    if !state.is_member(viewer) {
        return Err(SessionError::NotOnRoster(viewer.clone()));
    }
    let profile = state
        .profiles
        .get(target)
        .ok_or_else(|| SessionError::NotOnRoster(target.clone()))?;
    if viewer == target {
        return Err(SessionError::SelfView);
    }
    let show_ratings = state.round >= 2;
    let others_rating = show_ratings
        .then(|| mean_axis_rating(&profile.ratings_received))
        .flatten();
    let own_rating = show_ratings
        .then(|| mean_axis_rating(profile.ratings_received.iter().filter(|r| r.rater == *viewer)))
        .flatten();
    Ok(ProfileView {
        user: target.clone(),
        username: profile.username.clone(),
        demographics: profile.demographics.clone(),
        writing_sample: profile.writing_sample.clone(),
        others_rating,
        own_rating,
    })
}
