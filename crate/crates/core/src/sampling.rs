//! Anchor selection and s-walk subgraph sampling.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;

/// Hyperedge sequence of one s-walk and the node set it induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSample {
    pub center: usize,
    pub hyperedge_seq: Vec<usize>,
    /// Sorted ascending.
    pub node_set: Vec<usize>,
}

impl SubgraphSample {
    /// Checks the overlap chain, center membership and (for union samples)
    /// that the node set is the union of the visited hyperedges.
    pub fn validate(&self, hg: &Hypergraph, s: usize, union: bool) -> bool {
        let Some(&first) = self.hyperedge_seq.first() else {
            return false;
        };
        if !hg.members(first).contains(&self.center) {
            return false;
        }
        let chain_ok = self.hyperedge_seq.windows(2).all(|w| {
            let b = hg.members(w[1]);
            hg.members(w[0]).iter().filter(|v| b.contains(v)).count() >= s
        });
        if !chain_ok {
            return false;
        }
        if union {
            let mut expected: Vec<usize> = self
                .hyperedge_seq
                .iter()
                .flat_map(|&e| hg.members(e).iter().copied())
                .collect();
            expected.sort_unstable();
            expected.dedup();
            expected == self.node_set
        } else {
            self.node_set.contains(&self.center)
                && self.node_set.windows(2).all(|w| w[0] < w[1])
        }
    }
}

/// How the node set of a walk is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSetMode {
    /// Union of all visited hyperedges.
    #[default]
    Union,
    /// The center plus one uniformly drawn member per visited hyperedge.
    SampledPerEdge,
}

/// The `ceil(r% * |V|)` nodes of highest weighted degree, ties by ascending id.
pub fn select_anchor_nodes(hg: &Hypergraph, r_percent: f64) -> Result<Vec<usize>> {
    if !(r_percent > 0.0 && r_percent <= 100.0) {
        return Err(Error::InvalidRatio(r_percent));
    }
    let n = hg.num_nodes();
    let take = ((r_percent / 100.0) * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let deg = hg.node_degrees();
    order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]).then(a.cmp(&b)));
    order.truncate(take.min(n));
    Ok(order)
}

/// Walk over hyperedges from `center`.
///
/// The first hyperedge is uniform among those containing `center`; each step
/// moves uniformly to an unvisited hyperedge sharing at least `s` members
/// with the current one and stops early at a dead end. `adjacency` must be
/// the s-adjacency lists of `hg` for the same `s`.
pub fn s_walk_with<R: Rng>(
    hg: &Hypergraph,
    adjacency: &[Vec<usize>],
    center: usize,
    l: usize,
    mode: NodeSetMode,
    rng: &mut R,
) -> Result<SubgraphSample> {
    if center >= hg.num_nodes() {
        return Err(Error::NodeIdOutOfRange {
            id: center,
            num_nodes: hg.num_nodes(),
        });
    }
    if l < 1 {
        return Err(Error::InvalidConfig("walk length must be at least 1".into()));
    }
    let start = *hg
        .edges_of(center)
        .choose(rng)
        .ok_or(Error::IsolatedCenter { node: center })?;
    let mut seq = vec![start];
    while seq.len() < l {
        let current = *seq.last().unwrap();
        let options: Vec<usize> = adjacency[current]
            .iter()
            .copied()
            .filter(|f| !seq.contains(f))
            .collect();
        match options.choose(rng) {
            Some(&next) => seq.push(next),
            None => break,
        }
    }
    let mut node_set: Vec<usize> = match mode {
        NodeSetMode::Union => seq
            .iter()
            .flat_map(|&e| hg.members(e).iter().copied())
            .collect(),
        NodeSetMode::SampledPerEdge => std::iter::once(center)
            .chain(seq.iter().map(|&e| *hg.members(e).choose(rng).unwrap()))
            .collect(),
    };
    node_set.sort_unstable();
    node_set.dedup();
    Ok(SubgraphSample {
        center,
        hyperedge_seq: seq,
        node_set,
    })
}

/// Convenience wrapper computing the s-adjacency on the fly.
pub fn s_walk<R: Rng>(
    hg: &Hypergraph,
    center: usize,
    s: usize,
    l: usize,
    rng: &mut R,
) -> Result<SubgraphSample> {
    let adjacency = hg.s_adjacency_lists(s)?;
    s_walk_with(hg, &adjacency, center, l, NodeSetMode::Union, rng)
}
