use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AffinityError, AffinityGraph, Result, Score, UserId};

/// Largest roster the exhaustive partition search accepts.
pub const BRUTE_FORCE_MAX_ROSTER: usize = 12;

const MAX_CANDIDATES: u128 = 5_000_000;

/// A k-subset of the roster scored by its mean pairwise edge weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTeam {
    pub members: Vec<UserId>,
    pub score: Score,
}

/// How users left over after forming full teams were placed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Residual {
    /// A single leftover user joined the team they have the highest mean
    /// affinity toward (lowest team index on ties).
    JoinedTeam {
        user: UserId,
        team: usize,
        mean_affinity: Score,
    },
    /// Two or more leftovers formed a smaller final team.
    ShortTeam { team: usize, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamAssignment {
    pub teams: Vec<Vec<UserId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<Residual>,
}

impl TeamAssignment {
    pub fn team_of(&self, user: &UserId) -> Option<usize> {
        self.teams.iter().position(|t| t.contains(user))
    }

    /// Everyone sharing a team with `user`, excluding `user`.
    pub fn teammates_of(&self, user: &UserId) -> Vec<UserId> {
        self.team_of(user)
            .map(|t| self.teams[t].iter().filter(|m| *m != user).cloned().collect())
            .unwrap_or_default()
    }

    pub fn members(&self) -> BTreeSet<UserId> {
        self.teams.iter().flatten().cloned().collect()
    }

    /// True when teams are pairwise disjoint and cover exactly `roster`.
    pub fn is_partition_of(&self, roster: &BTreeSet<UserId>) -> bool {
        let count: usize = self.teams.iter().map(Vec::len).sum();
        count == roster.len() && self.members() == *roster
    }

    /// Sum over teams of mean pairwise edge weight.
    pub fn total_score(&self, graph: &AffinityGraph) -> Result<Score> {
        self.teams
            .iter()
            .map(|t| {
                let idx = t
                    .iter()
                    .map(|id| graph.index_of(id).ok_or_else(|| AffinityError::UnknownUser(id.clone())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(team_score(graph, &idx))
            })
            .sum()
    }
}

struct Candidate {
    members: Vec<usize>,
    halves: u32,
}

fn pair_count(size: usize) -> u64 {
    (size * size.saturating_sub(1) / 2) as u64
}

fn halves_within(graph: &AffinityGraph, members: &[usize]) -> u32 {
    let mut sum = 0u32;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            sum += graph.halves_at(i, j) as u32;
        }
    }
    sum
}

fn team_score(graph: &AffinityGraph, members: &[usize]) -> Score {
    let pairs = pair_count(members.len());
    if pairs == 0 {
        return Score::zero();
    }
    Score::new(halves_within(graph, members) as u64, 2 * pairs)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn check_team_size(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(AffinityError::TeamSizeTooSmall(k));
    }
    if k > n {
        return Err(AffinityError::TeamLargerThanRoster { k, n });
    }
    Ok(())
}

/// Every k-subset in lexicographic order of node index.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + (i - 1) {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn ranked_candidates(graph: &AffinityGraph, k: usize, tie_seed: Option<u64>) -> Result<Vec<Candidate>> {
    let n = graph.len();
    check_team_size(n, k)?;
    let count = binomial(n, k);
    if count > MAX_CANDIDATES {
        return Err(AffinityError::TooManyCandidates { count });
    }
    let mut cands: Vec<Candidate> = combinations(n, k)
        .into_iter()
        .map(|members| Candidate {
            halves: halves_within(graph, &members),
            members,
        })
        .collect();
    if let Some(seed) = tie_seed {
        // Shuffle once, then a stable sort keeps the shuffled order among
        // equal scores.
        cands.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    // Every candidate has the same pair count, so the halves sum orders
    // them exactly like the mean does.
    cands.sort_by(|a, b| b.halves.cmp(&a.halves));
    Ok(cands)
}

/// All candidate teams of size `k`, best first.
///
/// Equal scores keep lexicographic member order when `tie_seed` is `None`,
/// and a seeded uniform permutation otherwise.
pub fn enumerate_candidate_teams(
    graph: &AffinityGraph,
    k: usize,
    tie_seed: Option<u64>,
) -> Result<Vec<CandidateTeam>> {
    let pairs = pair_count(k);
    Ok(ranked_candidates(graph, k, tie_seed)?
        .into_iter()
        .map(|c| CandidateTeam {
            members: c.members.iter().map(|&i| graph.nodes()[i].clone()).collect(),
            score: Score::new(c.halves as u64, 2 * pairs),
        })
        .collect())
}

/// Greedy team formation: take the best remaining candidate team, drop every
/// candidate overlapping it, repeat.
///
/// A single leftover user joins the formed team they have the highest mean
/// edge weight toward; two or more leftovers form one smaller team.
pub fn greedy_assign(graph: &AffinityGraph, k: usize, seed: u64) -> Result<TeamAssignment> {
    let n = graph.len();
    let ranked = ranked_candidates(graph, k, Some(seed))?;
    let mut used = vec![false; n];
    let mut remaining = n;
    let mut teams: Vec<Vec<usize>> = Vec::with_capacity(n / k + 1);
    for cand in &ranked {
        if remaining < k {
            break;
        }
        if cand.members.iter().all(|&i| !used[i]) {
            for &i in &cand.members {
                used[i] = true;
            }
            remaining -= k;
            teams.push(cand.members.clone());
        }
    }

    let leftover: Vec<usize> = (0..n).filter(|&i| !used[i]).collect();
    let residual = match leftover.len() {
        0 => None,
        1 => {
            let user = leftover[0];
            let (team, mean) = teams
                .iter()
                .enumerate()
                .map(|(t, members)| {
                    let sum: u64 = members.iter().map(|&m| graph.halves_at(user, m) as u64).sum();
                    (t, Score::new(sum, 2 * members.len() as u64))
                })
                .fold(None, |best: Option<(usize, Score)>, (t, s)| match best {
                    Some((_, bs)) if bs >= s => best,
                    _ => Some((t, s)),
                })
                .expect("at least one team exists because k <= n");
            teams[team].push(user);
            teams[team].sort_unstable();
            Some(Residual::JoinedTeam {
                user: graph.nodes()[user].clone(),
                team,
                mean_affinity: mean,
            })
        }
        size => {
            teams.push(leftover);
            Some(Residual::ShortTeam {
                team: teams.len() - 1,
                size,
            })
        }
    };

    Ok(TeamAssignment {
        teams: teams
            .into_iter()
            .map(|t| t.into_iter().map(|i| graph.nodes()[i].clone()).collect())
            .collect(),
        residual,
    })
}

/// Exact maximum-total-score partition into teams of size `k`.
///
/// Among optimal partitions the lexicographically smallest team list (by node
/// order) wins.
pub fn brute_force_assign(graph: &AffinityGraph, k: usize) -> Result<TeamAssignment> {
    let n = graph.len();
    if n > BRUTE_FORCE_MAX_ROSTER {
        return Err(AffinityError::RosterTooLarge {
            n,
            max: BRUTE_FORCE_MAX_ROSTER,
        });
    }
    check_team_size(n, k)?;
    if n % k != 0 {
        return Err(AffinityError::Indivisible { n, k });
    }

    struct Search<'a> {
        graph: &'a AffinityGraph,
        k: usize,
        used: Vec<bool>,
        current: Vec<Vec<usize>>,
        best: Option<(u32, Vec<Vec<usize>>)>,
    }

    impl Search<'_> {
        fn run(&mut self, sum: u32) {
            let Some(first) = self.used.iter().position(|u| !u) else {
                if self.best.as_ref().is_none_or(|(b, _)| sum > *b) {
                    self.best = Some((sum, self.current.clone()));
                }
                return;
            };
            self.used[first] = true;
            let mut team = vec![first];
            self.extend(&mut team, first + 1, sum);
            self.used[first] = false;
        }

        fn extend(&mut self, team: &mut Vec<usize>, from: usize, sum: u32) {
            if team.len() == self.k {
                let gained = halves_within(self.graph, team);
                self.current.push(team.clone());
                self.run(sum + gained);
                self.current.pop();
                return;
            }
            for next in from..self.used.len() {
                if self.used[next] {
                    continue;
                }
                self.used[next] = true;
                team.push(next);
                self.extend(team, next + 1, sum);
                team.pop();
                self.used[next] = false;
            }
        }
    }

    let mut search = Search {
        graph,
        k,
        used: vec![false; n],
        current: Vec::new(),
        best: None,
    };
    search.run(0);
    let (_, teams) = search.best.expect("n % k == 0 admits a partition");
    Ok(TeamAssignment {
        teams: teams
            .into_iter()
            .map(|t| t.into_iter().map(|i| graph.nodes()[i].clone()).collect())
            .collect(),
        residual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::EdgeWeight;
    use std::collections::BTreeMap;

    /// Builds a graph from edge weights given in halves.
    fn graph(edges: &[(&str, &str, u8)]) -> AffinityGraph {
        let map: BTreeMap<(UserId, UserId), u8> = edges
            .iter()
            .flat_map(|(u, v, h)| {
                [
                    ((UserId::from(*u), UserId::from(*v)), *h),
                    ((UserId::from(*v), UserId::from(*u)), *h),
                ]
            })
            .collect();
        let nodes: BTreeSet<UserId> = map.keys().map(|(u, _)| u.clone()).collect();
        AffinityGraph::from_fn(nodes, |u, v| {
            EdgeWeight::from_halves(map[&(u.clone(), v.clone())]).unwrap()
        })
        .unwrap()
    }

    // AB=1.5 AC=3 AD=1.5 BC=1.5 BD=1 CD=1
    fn four_node() -> AffinityGraph {
        graph(&[
            ("A", "B", 3),
            ("A", "C", 6),
            ("A", "D", 3),
            ("B", "C", 3),
            ("B", "D", 2),
            ("C", "D", 2),
        ])
    }

    fn names(a: &TeamAssignment) -> Vec<Vec<&str>> {
        a.teams
            .iter()
            .map(|t| t.iter().map(UserId::as_str).collect())
            .collect()
    }

    #[test]
    fn candidate_count_and_top_team() {
        let g = four_node();
        let cands = enumerate_candidate_teams(&g, 2, None).unwrap();
        assert_eq!(cands.len(), 6);
        assert_eq!(cands[0].members, vec![UserId::from("A"), UserId::from("C")]);
        assert_eq!(cands[0].score, Score::from_integer(3));
        assert!(cands.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn triads_on_six_nodes() {
        let nodes: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
        let g = AffinityGraph::from_fn(nodes.iter().map(|s| UserId::from(s.as_str())), |_, _| {
            EdgeWeight::from_halves(3).unwrap()
        })
        .unwrap();
        let cands = enumerate_candidate_teams(&g, 3, Some(1)).unwrap();
        assert_eq!(cands.len(), 20);
        assert!(cands.iter().all(|c| c.score == Score::new(9, 6)));
    }

    #[test]
    fn greedy_on_worked_instance() {
        let g = four_node();
        let a = greedy_assign(&g, 2, 7).unwrap();
        assert_eq!(names(&a), vec![vec!["A", "C"], vec!["B", "D"]]);
        assert_eq!(a.total_score(&g).unwrap(), Score::from_integer(4));
        assert_eq!(a.residual, None);
    }

    #[test]
    fn brute_force_on_worked_instance() {
        let g = four_node();
        let a = brute_force_assign(&g, 2).unwrap();
        assert_eq!(names(&a), vec![vec!["A", "C"], vec!["B", "D"]]);
        assert_eq!(a.total_score(&g).unwrap(), Score::from_integer(4));
    }

    #[test]
    fn greedy_is_reproducible_under_ties() {
        let nodes: Vec<UserId> = (0..8).map(|i| UserId::new(format!("u{i}"))).collect();
        let g = AffinityGraph::from_fn(nodes.clone(), |_, _| EdgeWeight::from_halves(2).unwrap())
            .unwrap();
        let a = greedy_assign(&g, 2, 99).unwrap();
        let b = greedy_assign(&g, 2, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.is_partition_of(&nodes.iter().cloned().collect()));
        assert!(a.teams.iter().all(|t| t.len() == 2));
        let distinct: BTreeSet<_> = (0..32)
            .map(|s| serde_json::to_string(&greedy_assign(&g, 2, s).unwrap()).unwrap())
            .collect();
        assert!(distinct.len() > 1, "seed should influence tie-breaking");
    }

    #[test]
    fn odd_roster_attaches_leftover_to_best_team() {
        // E prefers the team containing C.
        let g = graph(&[
            ("A", "B", 6),
            ("A", "C", 0),
            ("A", "D", 0),
            ("A", "E", 2),
            ("B", "C", 0),
            ("B", "D", 0),
            ("B", "E", 2),
            ("C", "D", 6),
            ("C", "E", 4),
            ("D", "E", 2),
        ]);
        for seed in 0..8 {
            let a = greedy_assign(&g, 2, seed).unwrap();
            let team = a.team_of(&"E".into()).unwrap();
            assert_eq!(names(&a)[team], vec!["C", "D", "E"]);
            assert_eq!(names(&a)[1 - team], vec!["A", "B"]);
            assert_eq!(
                a.residual,
                Some(Residual::JoinedTeam {
                    user: "E".into(),
                    team,
                    mean_affinity: Score::new(6, 4),
                })
            );
        }
    }

    #[test]
    fn short_final_team_for_larger_k() {
        let nodes: Vec<UserId> = (0..8).map(|i| UserId::new(format!("u{i}"))).collect();
        let g = AffinityGraph::from_fn(nodes, |_, _| EdgeWeight::from_halves(2).unwrap()).unwrap();
        let a = greedy_assign(&g, 3, 0).unwrap();
        let sizes: Vec<usize> = a.teams.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 2]);
        assert_eq!(a.residual, Some(Residual::ShortTeam { team: 2, size: 2 }));
    }

    #[test]
    fn precondition_errors() {
        let g = four_node();
        assert_eq!(
            enumerate_candidate_teams(&g, 5, None).unwrap_err(),
            AffinityError::TeamLargerThanRoster { k: 5, n: 4 }
        );
        assert_eq!(
            greedy_assign(&g, 1, 0).unwrap_err(),
            AffinityError::TeamSizeTooSmall(1)
        );
        assert_eq!(
            brute_force_assign(&g, 3).unwrap_err(),
            AffinityError::Indivisible { n: 4, k: 3 }
        );
        let big: Vec<UserId> = (0..14).map(|i| UserId::new(format!("u{i:02}"))).collect();
        let g = AffinityGraph::from_fn(big, |_, _| EdgeWeight::default()).unwrap();
        assert_eq!(
            brute_force_assign(&g, 2).unwrap_err(),
            AffinityError::RosterTooLarge { n: 14, max: 12 }
        );
    }

    #[test]
    fn uniform_graph_brute_force_total() {
        let nodes: Vec<UserId> = (0..6).map(|i| UserId::new(format!("u{i}"))).collect();
        let g = AffinityGraph::from_fn(nodes, |_, _| EdgeWeight::from_halves(2).unwrap()).unwrap();
        let a = brute_force_assign(&g, 2).unwrap();
        assert_eq!(a.total_score(&g).unwrap(), Score::from_integer(3));
        // lexicographic tie-break
        assert_eq!(
            names(&a),
            vec![vec!["u0", "u1"], vec!["u2", "u3"], vec!["u4", "u5"]]
        );
    }

    #[test]
    fn assignment_serialized_form() {
        let a = greedy_assign(&four_node(), 2, 1).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(text, r#"{"teams":[["A","C"],["B","D"]]}"#);
    }
}
