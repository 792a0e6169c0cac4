//! Community detection on a cumulative affinity network.
//!
//! Edges lighter than the network's mean pair weight are pruned, then labels
//! propagate in a seeded random order until no node changes.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CumulativeAffinityNetwork;
use crate::affinity::UserId;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clustering {
    /// Cluster index per node, numbered in node order from 0.
    pub labels: BTreeMap<UserId, usize>,
    pub count: usize,
    pub converged: bool,
}

/// Seeded label propagation. With `directed`, each arc is pruned on its own
/// against the mean arc weight and a node counts both its surviving in- and
/// out-arcs; otherwise the symmetric cumulative weights are used.
pub fn detect_clusters(net: &CumulativeAffinityNetwork, seed: u64, directed: bool) -> Clustering {
    let nodes = &net.nodes;
    let n = nodes.len();
    // adjacency[i] = (j, weight) for surviving links
    let mut adjacency: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    if n > 1 {
        let w = |i: usize, j: usize| -> u64 {
            if directed {
                net.directed_weight(&nodes[i], &nodes[j])
            } else {
                net.halves_between(&nodes[i], &nodes[j])
            }
        };
        let pairs: Vec<(usize, usize)> = if directed {
            (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .collect()
        } else {
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect()
        };
        let total: u64 = pairs.iter().map(|&(i, j)| w(i, j)).sum();
        let count = pairs.len() as u64;
        for &(i, j) in &pairs {
            let weight = w(i, j);
            // weight < total / count, kept exact
            if weight == 0 || weight * count < total {
                continue;
            }
            adjacency[i].push((j, weight));
            adjacency[j].push((i, weight));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            if adjacency[i].is_empty() {
                continue;
            }
            let mut score: BTreeMap<usize, u64> = BTreeMap::new();
            for &(j, weight) in &adjacency[i] {
                *score.entry(label[j]).or_default() += weight;
            }
            let best = *score.values().max().expect("non-empty adjacency");
            if score.get(&label[i]) == Some(&best) {
                continue;
            }
            let top: Vec<usize> = score
                .iter()
                .filter(|(_, s)| **s == best)
                .map(|(l, _)| *l)
                .collect();
            label[i] = *top.choose(&mut rng).expect("a maximum exists");
            changed = true;
        }
        if !changed {
            converged = true;
            break;
        }
    }

    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        let next = renumber.len();
        let l = *renumber.entry(label[i]).or_insert(next);
        labels.insert(node.clone(), l);
    }
    Clustering {
        count: renumber.len(),
        labels,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::PreferenceBallot;

    fn ballot(voter: &str, prev: Option<&str>, chosen: &[&str]) -> PreferenceBallot {
        PreferenceBallot {
            voter: voter.into(),
            previous_teammate: prev.map(UserId::from),
            stay_with_previous: prev.map(|_| true),
            chosen: chosen.iter().map(|c| UserId::from(*c)).collect(),
        }
    }

    fn two_pairs() -> CumulativeAffinityNetwork {
        let mut net = CumulativeAffinityNetwork::default();
        net.add_round(
            "s",
            2,
            &[
                ballot("A", Some("B"), &[]),
                ballot("B", Some("A"), &[]),
                ballot("C", Some("D"), &[]),
                ballot("D", Some("C"), &[]),
            ],
            |u| u.clone(),
        )
        .unwrap();
        net
    }

    #[test]
    fn separated_pairs_form_two_clusters() {
        for directed in [false, true] {
            let c = detect_clusters(&two_pairs(), 4, directed);
            assert_eq!(c.count, 2);
            assert_eq!(c.labels[&UserId::from("A")], c.labels[&UserId::from("B")]);
            assert_ne!(c.labels[&UserId::from("A")], c.labels[&UserId::from("C")]);
        }
    }

    #[test]
    fn uniform_network_is_one_cluster() {
        let mut net = CumulativeAffinityNetwork::default();
        let names = ["A", "B", "C", "D", "E", "F"];
        let ballots: Vec<_> = names.iter().map(|n| ballot(n, None, &[])).collect();
        net.add_round("s", 1, &ballots, |u| u.clone()).unwrap();
        for seed in 0..20 {
            assert_eq!(detect_clusters(&net, seed, false).count, 1, "seed {seed}");
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let net = two_pairs();
        assert_eq!(detect_clusters(&net, 9, false), detect_clusters(&net, 9, false));
    }
}
