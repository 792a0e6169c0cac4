//! Affinity accumulated over rounds and sessions.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{session_meta, MetricsError};
use crate::affinity::{
    build_affinity_graph, encode_ballot, AffinityGraph, DirectedWeightVector, PreferenceBallot,
    Score, UserId,
};
use crate::session::{Condition, Event, LogRecord};

/// The affinity graph of one selection stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundSnapshot {
    pub session: String,
    pub round: u32,
    pub graph: AffinityGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CumulativeEdge {
    pub u: UserId,
    pub v: UserId,
    pub weight: Score,
    /// Rounds in which both endpoints were on the ballot roster.
    pub rounds: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CumulativeAffinityNetwork {
    pub nodes: Vec<UserId>,
    pub snapshots: Vec<RoundSnapshot>,
    pub conditions: Vec<Condition>,
    pub warnings: Vec<String>,
    /// Undirected sums in half units, keyed with `u < v`.
    #[serde(skip)]
    halves: BTreeMap<(UserId, UserId), u64>,
    #[serde(skip)]
    rounds: BTreeMap<(UserId, UserId), u32>,
    /// Directed sums of raw ballot weights, keyed `(from, to)`.
    #[serde(skip)]
    directed: BTreeMap<(UserId, UserId), u64>,
}

fn key(a: &UserId, b: &UserId) -> (UserId, UserId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl CumulativeAffinityNetwork {
    /// Cumulative undirected weight, zero for pairs that never met.
    pub fn weight(&self, a: &UserId, b: &UserId) -> Score {
        Score::new(self.halves_between(a, b), 2)
    }

    pub fn halves_between(&self, a: &UserId, b: &UserId) -> u64 {
        self.halves.get(&key(a, b)).copied().unwrap_or(0)
    }

    /// Cumulative directed weight from `from` toward `to`.
    pub fn directed_weight(&self, from: &UserId, to: &UserId) -> u64 {
        self.directed
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn edges(&self) -> Vec<CumulativeEdge> {
        self.halves
            .iter()
            .map(|((u, v), h)| CumulativeEdge {
                u: u.clone(),
                v: v.clone(),
                weight: Score::new(*h, 2),
                rounds: self.rounds.get(&(u.clone(), v.clone())).copied().unwrap_or(0),
            })
            .collect()
    }

    /// Adds one round's ballots. `rename` maps logged ids to network nodes.
    pub(crate) fn add_round(
        &mut self,
        session: &str,
        round: u32,
        ballots: &[PreferenceBallot],
        rename: impl Fn(&UserId) -> UserId,
    ) -> Result<(), MetricsError> {
        let roster: BTreeSet<UserId> = ballots.iter().map(|b| b.voter.clone()).collect();
        let vectors: Vec<DirectedWeightVector> = ballots
            .iter()
            .map(|b| encode_ballot(b, &roster))
            .collect::<Result<_, _>>()?;
        let graph = build_affinity_graph(&vectors, &roster)?;
        for e in graph.edges() {
            let k = key(&rename(&e.u), &rename(&e.v));
            *self.halves.entry(k.clone()).or_default() += u64::from(e.weight.halves());
            *self.rounds.entry(k).or_default() += 1;
        }
        for vec in &vectors {
            for (to, w) in &vec.weights {
                *self
                    .directed
                    .entry((rename(&vec.voter), rename(to)))
                    .or_default() += u64::from(w.value());
            }
        }
        let mut nodes: BTreeSet<UserId> = self.nodes.iter().cloned().collect();
        nodes.extend(roster.iter().map(&rename));
        self.nodes = nodes.into_iter().collect();
        self.snapshots.push(RoundSnapshot {
            session: session.to_owned(),
            round,
            graph,
        });
        Ok(())
    }
}

/// Sums every closed selection stage's affinity graph across the given logs.
/// With more than one log, nodes are named `session/user` so participants of
/// different sessions stay distinct.
pub fn cumulative_affinity<L: AsRef<[LogRecord]>>(
    logs: &[L],
) -> Result<CumulativeAffinityNetwork, MetricsError> {
    let mut net = CumulativeAffinityNetwork::default();
    let prefix = logs.len() > 1;
    for log in logs {
        let log = log.as_ref();
        let meta = session_meta(log)?;
        if !net.conditions.contains(&meta.condition) {
            net.conditions.push(meta.condition);
        }
        let rename = |u: &UserId| {
            if prefix {
                UserId::new(format!("{}/{}", meta.session, u))
            } else {
                u.clone()
            }
        };
        for r in log {
            if let Event::BallotsClosed { ballots, .. } = &r.event {
                if !ballots.is_empty() {
                    net.add_round(&meta.session, r.round, ballots, rename)?;
                }
            }
        }
    }
    if net.conditions.len() > 1 {
        net.warnings.push(format!(
            "logs from {} conditions were combined into one network",
            net.conditions.len()
        ));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ballot(voter: &str, prev: Option<(&str, bool)>, chosen: &[&str]) -> PreferenceBallot {
        PreferenceBallot {
            voter: voter.into(),
            previous_teammate: prev.map(|(p, _)| p.into()),
            stay_with_previous: prev.map(|(_, s)| s),
            chosen: chosen.iter().map(|c| UserId::from(*c)).collect(),
        }
    }

    #[test]
    fn rounds_add_up_exactly() {
        let mut net = CumulativeAffinityNetwork::default();
        let id = |u: &UserId| u.clone();
        // A->B 2, B->A 1
        net.add_round("s", 1, &[ballot("A", None, &["B"]), ballot("B", None, &[])], id)
            .unwrap();
        // 1, 1
        net.add_round("s", 2, &[ballot("A", None, &[]), ballot("B", None, &[])], id)
            .unwrap();
        // A leaves B (0), B neutral (1)
        net.add_round(
            "s",
            3,
            &[ballot("A", Some(("B", false)), &[]), ballot("B", None, &[])],
            id,
        )
        .unwrap();
        assert_eq!(net.weight(&"A".into(), &"B".into()), Score::from_integer(3));
        assert_eq!(net.directed_weight(&"A".into(), &"B".into()), 3);
        assert_eq!(net.directed_weight(&"B".into(), &"A".into()), 3);
        assert_eq!(net.edges()[0].rounds, 3);
        assert_eq!(net.snapshots.len(), 3);
    }

    #[test]
    fn mutual_stay_accumulates_three_per_round() {
        let mut net = CumulativeAffinityNetwork::default();
        for r in 1..=3 {
            net.add_round(
                "s",
                r,
                &[ballot("A", Some(("B", true)), &[]), ballot("B", Some(("A", true)), &[])],
                |u| u.clone(),
            )
            .unwrap();
        }
        assert_eq!(net.weight(&"A".into(), &"B".into()), Score::from_integer(9));
    }
}
