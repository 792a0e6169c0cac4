use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AffinityError, DirectedWeightVector, EdgeWeight, Result, UserId};

/// Complete undirected graph over a roster with half-integer edge weights.
///
/// Nodes are kept in sorted order; internally edges live in a dense
/// symmetric matrix indexed by node position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct AffinityGraph {
    nodes: Vec<UserId>,
    halves: Vec<u8>,
}

/// One serialized edge, `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: UserId,
    pub v: UserId,
    pub weight: EdgeWeight,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<UserId>,
    edge_weight: Vec<Edge>,
}

impl AffinityGraph {
    /// Builds a graph from a weight function over unordered pairs.
    pub fn from_fn<F>(nodes: impl IntoIterator<Item = UserId>, mut weight: F) -> Result<Self>
    where
        F: FnMut(&UserId, &UserId) -> EdgeWeight,
    {
        let set: BTreeSet<UserId> = nodes.into_iter().collect();
        let nodes: Vec<UserId> = set.into_iter().collect();
        let n = nodes.len();
        let mut halves = vec![0u8; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let h = weight(&nodes[i], &nodes[j]).halves();
                halves[i * n + j] = h;
                halves[j * n + i] = h;
            }
        }
        Ok(AffinityGraph { nodes, halves })
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &UserId) -> Option<usize> {
        self.nodes.binary_search(id).ok()
    }

    pub fn edge(&self, u: &UserId, v: &UserId) -> Option<EdgeWeight> {
        let (i, j) = (self.index_of(u)?, self.index_of(v)?);
        if i == j {
            return None;
        }
        Some(self.edge_at(i, j))
    }

    pub(crate) fn edge_at(&self, i: usize, j: usize) -> EdgeWeight {
        EdgeWeight::from_halves(self.halves[i * self.nodes.len() + j])
            .expect("stored edge weights are validated")
    }

    pub(crate) fn halves_at(&self, i: usize, j: usize) -> u8 {
        self.halves[i * self.nodes.len() + j]
    }

    /// All unordered edges, `u < v`, in node order.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.nodes.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(Edge {
                    u: self.nodes[i].clone(),
                    v: self.nodes[j].clone(),
                    weight: self.edge_at(i, j),
                });
            }
        }
        out
    }

    /// The graph restricted to a subset of its nodes.
    pub fn induced(&self, keep: &BTreeSet<UserId>) -> Result<AffinityGraph> {
        for id in keep {
            if self.index_of(id).is_none() {
                return Err(AffinityError::UnknownUser(id.clone()));
            }
        }
        AffinityGraph::from_fn(keep.iter().cloned(), |u, v| {
            self.edge(u, v).expect("both endpoints checked")
        })
    }
}

impl From<AffinityGraph> for GraphRecord {
    fn from(g: AffinityGraph) -> Self {
        GraphRecord {
            edge_weight: g.edges(),
            nodes: g.nodes,
        }
    }
}

impl TryFrom<GraphRecord> for AffinityGraph {
    type Error = AffinityError;

    fn try_from(rec: GraphRecord) -> Result<Self> {
        let set: BTreeSet<UserId> = rec.nodes.iter().cloned().collect();
        if set.len() != rec.nodes.len() {
            return Err(AffinityError::InvalidGraph("duplicate node".into()));
        }
        let mut weights = BTreeMap::new();
        for e in rec.edge_weight {
            if !set.contains(&e.u) || !set.contains(&e.v) || e.u == e.v {
                return Err(AffinityError::InvalidGraph(format!(
                    "edge {}-{} does not join two distinct nodes",
                    e.u, e.v
                )));
            }
            let key = if e.u < e.v { (e.u, e.v) } else { (e.v, e.u) };
            if weights.insert(key, e.weight).is_some() {
                return Err(AffinityError::InvalidGraph("duplicate edge".into()));
            }
        }
        let n = set.len();
        if weights.len() != n * n.saturating_sub(1) / 2 {
            return Err(AffinityError::InvalidGraph("graph is not complete".into()));
        }
        AffinityGraph::from_fn(set, |u, v| weights[&(u.clone(), v.clone())])
    }
}

/// Builds the affinity graph; every roster member needs exactly one vector.
pub fn build_affinity_graph(
    vectors: &[DirectedWeightVector],
    roster: &BTreeSet<UserId>,
) -> Result<AffinityGraph> {
    let mut by_voter: BTreeMap<&UserId, &DirectedWeightVector> = BTreeMap::new();
    for v in vectors {
        v.validate(roster)?;
        if by_voter.insert(&v.voter, v).is_some() {
            return Err(AffinityError::DuplicateVector(v.voter.clone()));
        }
    }
    if let Some(missing) = roster.iter().find(|id| !by_voter.contains_key(id)) {
        return Err(AffinityError::MissingVector(missing.clone()));
    }
    AffinityGraph::from_fn(roster.iter().cloned(), |u, v| {
        let forward = by_voter[u].weights[v].value();
        let backward = by_voter[v].weights[u].value();
        EdgeWeight::from_directed(forward, backward).expect("weights are at most 3")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::PreferenceWeight;

    fn vector(voter: &str, ws: &[(&str, u8)]) -> DirectedWeightVector {
        DirectedWeightVector {
            voter: voter.into(),
            weights: ws
                .iter()
                .map(|(id, w)| (UserId::from(*id), PreferenceWeight::new(*w).unwrap()))
                .collect(),
        }
    }

    fn roster() -> BTreeSet<UserId> {
        ["A", "B", "C", "D"].iter().map(|s| UserId::from(*s)).collect()
    }

    fn sample_vectors() -> Vec<DirectedWeightVector> {
        vec![
            vector("A", &[("B", 2), ("C", 3), ("D", 1)]),
            vector("B", &[("A", 3), ("C", 1), ("D", 1)]),
            vector("C", &[("A", 3), ("B", 2), ("D", 1)]),
            vector("D", &[("A", 2), ("B", 1), ("C", 1)]),
        ]
    }

    #[test]
    fn edges_are_pairwise_means() {
        let g = build_affinity_graph(&sample_vectors(), &roster()).unwrap();
        let e = |u: &str, v: &str| g.edge(&u.into(), &v.into()).unwrap().to_f64();
        assert_eq!(e("A", "B"), 2.5);
        assert_eq!(e("A", "C"), 3.0);
        assert_eq!(e("A", "D"), 1.5);
        assert_eq!(e("C", "A"), e("A", "C"));
        assert_eq!(g.edges().len(), 6);
    }

    #[test]
    fn duplicate_and_missing_vectors() {
        let mut vs = sample_vectors();
        vs.push(vs[0].clone());
        assert_eq!(
            build_affinity_graph(&vs, &roster()).unwrap_err(),
            AffinityError::DuplicateVector("A".into())
        );
        let vs = &sample_vectors()[..3];
        assert_eq!(
            build_affinity_graph(vs, &roster()).unwrap_err(),
            AffinityError::MissingVector("D".into())
        );
    }

    #[test]
    fn malformed_vectors_are_rejected() {
        let mut vs = sample_vectors();
        vs[3] = vector("D", &[("A", 3), ("B", 3), ("C", 1)]);
        assert!(matches!(
            build_affinity_graph(&vs, &roster()),
            Err(AffinityError::InvalidVector { .. })
        ));
        vs[3] = vector("D", &[("A", 1), ("B", 1)]);
        assert!(matches!(
            build_affinity_graph(&vs, &roster()),
            Err(AffinityError::InvalidVector { .. })
        ));
    }

    #[test]
    fn serialized_form_round_trips() {
        let g = build_affinity_graph(&sample_vectors(), &roster()).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"edge_weight\""));
        let back: AffinityGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);

        let incomplete = r#"{"nodes":["A","B","C"],"edge_weight":[{"u":"A","v":"B","weight":1}]}"#;
        assert!(serde_json::from_str::<AffinityGraph>(incomplete).is_err());
    }
}
