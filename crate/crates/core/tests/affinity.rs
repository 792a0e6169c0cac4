use std::collections::BTreeSet;

use proptest::prelude::*;

use sots::affinity::{
    brute_force_assign, build_affinity_graph, encode_ballot, enumerate_candidate_teams,
    greedy_assign, AffinityError, AffinityGraph, EdgeWeight, PreferenceBallot, Score, UserId,
};

fn users(n: usize) -> Vec<UserId> {
    (0..n).map(|i| UserId::new(format!("u{i:02}"))).collect()
}

/// Ballots for an even roster: a previous pairing given by `perm`, a stay
/// flag per voter, and up to two choices each.
fn ballots_strategy(n: usize) -> impl Strategy<Value = Vec<PreferenceBallot>> {
    (
        Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        prop::collection::vec(any::<bool>(), n),
        prop::collection::vec(prop::collection::btree_set(0..n, 0..=2), n),
        any::<bool>(),
    )
        .prop_map(move |(perm, stay, picks, first_round)| {
            let ids = users(n);
            let mut prev = vec![0; n];
            for pair in perm.chunks(2) {
                prev[pair[0]] = pair[1];
                prev[pair[1]] = pair[0];
            }
            (0..n)
                .map(|i| PreferenceBallot {
                    voter: ids[i].clone(),
                    previous_teammate: (!first_round).then(|| ids[prev[i]].clone()),
                    stay_with_previous: (!first_round).then_some(stay[i]),
                    chosen: picks[i]
                        .iter()
                        .filter(|&&j| j != i && (first_round || j != prev[i]))
                        .map(|&j| ids[j].clone())
                        .collect(),
                })
                .collect()
        })
}

fn graph_of(ballots: &[PreferenceBallot]) -> AffinityGraph {
    let roster: BTreeSet<UserId> = ballots.iter().map(|b| b.voter.clone()).collect();
    let vectors: Vec<_> = ballots.iter().map(|b| encode_ballot(b, &roster).unwrap()).collect();
    build_affinity_graph(&vectors, &roster).unwrap()
}

/// Best perfect matching by trying every partner for the first free node.
fn oracle(h: &[Vec<u64>], free: &mut [bool]) -> u64 {
    let Some(i) = free.iter().position(|f| *f) else {
        return 0;
    };
    free[i] = false;
    let mut best = 0;
    for j in i + 1..free.len() {
        if free[j] {
            free[j] = false;
            best = best.max(h[i][j] + oracle(h, free));
            free[j] = true;
        }
    }
    free[i] = true;
    best
}

fn halves_matrix(g: &AffinityGraph) -> Vec<Vec<u64>> {
    let nodes = g.nodes();
    nodes
        .iter()
        .map(|u| {
            nodes
                .iter()
                .map(|v| g.edge(u, v).map_or(0, |w| u64::from(w.halves())))
                .collect()
        })
        .collect()
}

fn sized_ballots() -> impl Strategy<Value = Vec<PreferenceBallot>> {
    prop_oneof![ballots_strategy(6), ballots_strategy(8), ballots_strategy(10)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(240))]

    #[test]
    fn encoding_is_total(ballots in sized_ballots()) {
        let roster: BTreeSet<UserId> = ballots.iter().map(|b| b.voter.clone()).collect();
        for b in &ballots {
            let v = encode_ballot(b, &roster).unwrap();
            prop_assert_eq!(v.weights.len(), roster.len() - 1);
            prop_assert!(!v.weights.contains_key(&b.voter));
            prop_assert!(v.weights.values().all(|w| w.value() <= 3));
        }
    }

    #[test]
    fn edges_are_symmetric_means(ballots in sized_ballots()) {
        let roster: BTreeSet<UserId> = ballots.iter().map(|b| b.voter.clone()).collect();
        let vectors: Vec<_> = ballots.iter().map(|b| encode_ballot(b, &roster).unwrap()).collect();
        let g = build_affinity_graph(&vectors, &roster).unwrap();
        for a in &vectors {
            for b in &vectors {
                if a.voter == b.voter {
                    continue;
                }
                let sum = a.weights[&b.voter].value() + b.weights[&a.voter].value();
                prop_assert_eq!(g.edge(&a.voter, &b.voter), EdgeWeight::from_halves(sum));
                prop_assert_eq!(g.edge(&a.voter, &b.voter), g.edge(&b.voter, &a.voter));
            }
        }
    }

    #[test]
    fn greedy_matches_well(ballots in sized_ballots(), seed in any::<u64>()) {
        let g = graph_of(&ballots);
        let roster: BTreeSet<UserId> = g.nodes().iter().cloned().collect();
        let a = greedy_assign(&g, 2, seed).unwrap();
        prop_assert!(a.is_partition_of(&roster));
        prop_assert!(a.teams.iter().all(|t| t.len() == 2));
        prop_assert!(a.residual.is_none());

        let h = halves_matrix(&g);
        let n = h.len();
        for i in 0..n {
            for j in i + 1..n {
                if h[i][j] == 6 {
                    prop_assert_eq!(a.team_of(&g.nodes()[i]), a.team_of(&g.nodes()[j]));
                }
            }
        }
        let best = oracle(&h, &mut vec![true; n]);
        let greedy = a.total_score(&g).unwrap();
        // best is in half units, so half the optimum is best/4
        prop_assert!(greedy >= Score::new(best, 4), "greedy {} below half of {}/2", greedy, best);
        let exact = brute_force_assign(&g, 2).unwrap().total_score(&g).unwrap();
        prop_assert_eq!(exact, Score::new(best, 2));
        prop_assert!(greedy <= exact);
    }

    #[test]
    fn greedy_is_deterministic(ballots in sized_ballots(), seed in any::<u64>()) {
        let g = graph_of(&ballots);
        let a = serde_json::to_string(&greedy_assign(&g, 2, seed).unwrap()).unwrap();
        let b = serde_json::to_string(&greedy_assign(&g, 2, seed).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn odd_rosters_keep_everyone(n in 3usize..11, seed in any::<u64>()) {
        let g = AffinityGraph::from_fn(users(n), |_, _| EdgeWeight::from_halves(2).unwrap()).unwrap();
        let roster: BTreeSet<UserId> = g.nodes().iter().cloned().collect();
        let a = greedy_assign(&g, 2, seed).unwrap();
        prop_assert!(a.is_partition_of(&roster));
        prop_assert_eq!(a.residual.is_some(), n % 2 == 1);
    }
}

#[test]
fn worked_four_node_instance() {
    let ids = users(4);
    let (a, b, c, d) = (&ids[0], &ids[1], &ids[2], &ids[3]);
    let w = |x: &UserId, y: &UserId| -> u8 {
        let pair = |p: &UserId, q: &UserId| (x == p && y == q) || (x == q && y == p);
        if pair(a, c) {
            6
        } else if pair(b, d) || pair(c, d) {
            2
        } else {
            3
        }
    };
    let g = AffinityGraph::from_fn(ids.clone(), |x, y| EdgeWeight::from_halves(w(x, y)).unwrap()).unwrap();
    let cands = enumerate_candidate_teams(&g, 2, None).unwrap();
    assert_eq!(cands.len(), 6);
    assert_eq!(cands[0].members, vec![a.clone(), c.clone()]);
    let greedy = greedy_assign(&g, 2, 5).unwrap();
    let exact = brute_force_assign(&g, 2).unwrap();
    assert_eq!(greedy.total_score(&g).unwrap(), Score::from_integer(4));
    assert_eq!(exact.total_score(&g).unwrap(), Score::from_integer(4));
    assert_eq!(greedy.team_of(a), greedy.team_of(c));
}

#[test]
fn oversized_rosters_are_refused_by_the_exact_search() {
    let g = AffinityGraph::from_fn(users(14), |_, _| EdgeWeight::from_halves(2).unwrap()).unwrap();
    assert!(matches!(brute_force_assign(&g, 2), Err(AffinityError::RosterTooLarge { .. })));
}
