//! Text-attributed hypergraph structure.
//!
//! The incidence matrix `H` (|V| x |E|, binary) is stored twice: column-major
//! (hyperedge -> sorted members) and row-major (node -> sorted incident
//! hyperedges). Both views are built once and never mutated.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Binary sparse incidence structure. Columns may be empty, which is what a
/// masked view needs; [`Hypergraph`] adds the non-emptiness invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    num_nodes: usize,
    edge_ptr: Vec<usize>,
    edge_members: Vec<usize>,
    node_ptr: Vec<usize>,
    node_edges: Vec<usize>,
}

impl Incidence {
    /// Builds from per-hyperedge member lists. Members must be `< num_nodes`;
    /// duplicates inside one list collapse to a single incidence.
    pub fn from_columns(num_nodes: usize, columns: &[Vec<usize>]) -> Result<Self> {
        let mut edge_ptr = Vec::with_capacity(columns.len() + 1);
        let mut edge_members = Vec::new();
        edge_ptr.push(0);
        for col in columns {
            let start = edge_members.len();
            for &v in col {
                if v >= num_nodes {
                    return Err(Error::NodeIdOutOfRange { id: v, num_nodes });
                }
                edge_members.push(v);
            }
            edge_members[start..].sort_unstable();
            let mut w = start;
            for r in start..edge_members.len() {
                if r == start || edge_members[r] != edge_members[w - 1] {
                    edge_members[w] = edge_members[r];
                    w += 1;
                }
            }
            edge_members.truncate(w);
            edge_ptr.push(edge_members.len());
        }
        Ok(Self::from_csc(num_nodes, edge_ptr, edge_members))
    }

    fn from_csc(num_nodes: usize, edge_ptr: Vec<usize>, edge_members: Vec<usize>) -> Self {
        let mut counts = vec![0usize; num_nodes + 1];
        for &v in &edge_members {
            counts[v + 1] += 1;
        }
        for i in 0..num_nodes {
            counts[i + 1] += counts[i];
        }
        let node_ptr = counts.clone();
        let mut fill = counts;
        let mut node_edges = vec![0usize; edge_members.len()];
        // Columns are visited in order, so each node's edge list comes out sorted.
        for e in 0..edge_ptr.len() - 1 {
            for &v in &edge_members[edge_ptr[e]..edge_ptr[e + 1]] {
                node_edges[fill[v]] = e;
                fill[v] += 1;
            }
        }
        Self {
            num_nodes,
            edge_ptr,
            edge_members,
            node_ptr,
            node_edges,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edge_ptr.len() - 1
    }

    /// Number of stored incidences (nonzeros of `H`).
    pub fn nnz(&self) -> usize {
        self.edge_members.len()
    }

    /// Sorted members of hyperedge `e`.
    pub fn members(&self, e: usize) -> &[usize] {
        &self.edge_members[self.edge_ptr[e]..self.edge_ptr[e + 1]]
    }

    /// Sorted hyperedges containing node `v`.
    pub fn edges_of(&self, v: usize) -> &[usize] {
        &self.node_edges[self.node_ptr[v]..self.node_ptr[v + 1]]
    }

    pub fn edge_size(&self, e: usize) -> usize {
        self.edge_ptr[e + 1] - self.edge_ptr[e]
    }

    pub fn contains(&self, v: usize, e: usize) -> bool {
        self.members(e).binary_search(&v).is_ok()
    }

    /// Offset of hyperedge `e`'s first incidence in column-major order.
    pub fn column_offset(&self, e: usize) -> usize {
        self.edge_ptr[e]
    }

    /// Keeps the incidences whose column-major position is flagged in `keep`.
    /// Hyperedges that lose every member stay as empty columns.
    pub fn masked(&self, keep: &[bool]) -> Incidence {
        assert_eq!(keep.len(), self.nnz(), "mask length must equal nnz");
        let mut edge_ptr = Vec::with_capacity(self.edge_ptr.len());
        let mut edge_members = Vec::with_capacity(self.nnz());
        edge_ptr.push(0);
        for e in 0..self.num_edges() {
            for k in self.edge_ptr[e]..self.edge_ptr[e + 1] {
                if keep[k] {
                    edge_members.push(self.edge_members[k]);
                }
            }
            edge_ptr.push(edge_members.len());
        }
        Self::from_csc(self.num_nodes, edge_ptr, edge_members)
    }

    /// Sub-incidence on the given node and hyperedge lists, re-indexed to
    /// local ids in the order given. Incidences to nodes outside `nodes` are
    /// dropped.
    pub fn restrict(&self, nodes: &[usize], edges: &[usize]) -> Incidence {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let columns: Vec<Vec<usize>> = edges
            .iter()
            .map(|&e| {
                self.members(e)
                    .iter()
                    .filter_map(|&v| (local[v] != usize::MAX).then_some(local[v]))
                    .collect()
            })
            .collect();
        Incidence::from_columns(nodes.len(), &columns).expect("local ids are in range")
    }

    /// Incidence triples `(node, hyperedge)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_edges()).flat_map(move |e| self.members(e).iter().map(move |&v| (v, e)))
    }
}

/// Immutable hypergraph with hyperedge weights and cached degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    incidence: Incidence,
    weights: Vec<f64>,
    node_degrees: Vec<f64>,
}

impl Hypergraph {
    /// Builds a hypergraph. Hyperedge order is preserved, duplicate hyperedges
    /// stay distinct columns, and weights default to 1.0.
    pub fn new(
        num_nodes: usize,
        hyperedges: &[Vec<usize>],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        for (e, members) in hyperedges.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyHyperedge { edge: e });
            }
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != hyperedges.len() {
                    return Err(Error::WeightCountMismatch {
                        expected: hyperedges.len(),
                        got: w.len(),
                    });
                }
                if let Some((edge, &weight)) =
                    w.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite()))
                {
                    return Err(Error::NonPositiveWeight { edge, weight });
                }
                w
            }
            None => vec![1.0; hyperedges.len()],
        };
        let incidence = Incidence::from_columns(num_nodes, hyperedges)?;
        let node_degrees = (0..num_nodes)
            .map(|v| incidence.edges_of(v).iter().fold(0.0, |acc, &e| acc + weights[e]))
            .collect();
        Ok(Self {
            incidence,
            weights,
            node_degrees,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.incidence.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.incidence.num_edges()
    }

    pub fn incidence(&self) -> &Incidence {
        &self.incidence
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted node degree `d(v) = sum_j w_j h_vj`.
    pub fn node_degree(&self, v: usize) -> f64 {
        self.node_degrees[v]
    }

    pub fn node_degrees(&self) -> &[f64] {
        &self.node_degrees
    }

    /// Member count `delta(e)`.
    pub fn edge_degree(&self, e: usize) -> usize {
        self.incidence.edge_size(e)
    }

    pub fn members(&self, e: usize) -> &[usize] {
        self.incidence.members(e)
    }

    pub fn edges_of(&self, v: usize) -> &[usize] {
        self.incidence.edges_of(v)
    }

    pub fn hyperedges(&self) -> Vec<Vec<usize>> {
        (0..self.num_edges()).map(|e| self.members(e).to_vec()).collect()
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes() {
            return Err(Error::NodeIdOutOfRange {
                id: v,
                num_nodes: self.num_nodes(),
            });
        }
        Ok(())
    }

    fn check_edge(&self, e: usize) -> Result<()> {
        if e >= self.num_edges() {
            return Err(Error::HyperedgeIdOutOfRange {
                id: e,
                num_edges: self.num_edges(),
            });
        }
        Ok(())
    }

    /// Nodes sharing at least one hyperedge with `v`, excluding `v`; sorted.
    pub fn one_hop_neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(self.neighbors_unchecked(v))
    }

    pub(crate) fn neighbors_unchecked(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges_of(v)
            .iter()
            .flat_map(|&e| self.members(e).iter().copied())
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// All 1-hop neighbor lists at once.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.num_nodes())
            .map(|v| self.neighbors_unchecked(v))
            .collect()
    }

    /// Hyperedges other than `e` sharing at least `s` members with it; sorted.
    pub fn s_adjacent_hyperedges(&self, e: usize, s: usize) -> Result<Vec<usize>> {
        self.check_edge(e)?;
        if s < 1 {
            return Err(Error::InvalidS(s));
        }
        let mut counts = vec![0usize; self.num_edges()];
        Ok(self.s_adjacent_with(e, s, &mut counts))
    }

    fn s_adjacent_with(&self, e: usize, s: usize, counts: &mut [usize]) -> Vec<usize> {
        let mut touched = Vec::new();
        for &v in self.members(e) {
            for &f in self.edges_of(v) {
                if f != e {
                    if counts[f] == 0 {
                        touched.push(f);
                    }
                    counts[f] += 1;
                }
            }
        }
        let mut out: Vec<usize> = touched.iter().copied().filter(|&f| counts[f] >= s).collect();
        for f in touched {
            counts[f] = 0;
        }
        out.sort_unstable();
        out
    }

    /// s-adjacency lists for every hyperedge.
    pub fn s_adjacency_lists(&self, s: usize) -> Result<Vec<Vec<usize>>> {
        if s < 1 {
            return Err(Error::InvalidS(s));
        }
        let mut counts = vec![0usize; self.num_edges()];
        Ok((0..self.num_edges())
            .map(|e| self.s_adjacent_with(e, s, &mut counts))
            .collect())
    }

    /// Mean hyperedge size.
    pub fn mean_edge_size(&self) -> f64 {
        if self.num_edges() == 0 {
            return 0.0;
        }
        self.incidence.nnz() as f64 / self.num_edges() as f64
    }
}

/// Simple undirected graph used as input to clique reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseGraph {
    num_nodes: usize,
    adjacency: Vec<Vec<usize>>,
}

impl PairwiseGraph {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); num_nodes];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::NodeIdOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }
}

/// Class index per node; `None` for unlabeled nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl NodeLabels {
    pub fn new(labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if let Some((node, c)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::InvariantViolation(format!(
                "node {node} has class {c} but only {num_classes} classes exist"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Infers the class count as `max label + 1`.
    pub fn from_labels(labels: Vec<Option<usize>>) -> Self {
        let num_classes = labels.iter().flatten().max().map_or(0, |&m| m + 1);
        Self {
            labels,
            num_classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hypergraph(rng: &mut ChaCha8Rng, n: usize, m: usize, max_size: usize) -> Hypergraph {
        let edges: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=max_size);
                (0..k).map(|_| rng.random_range(0..n)).collect()
            })
            .collect();
        Hypergraph::new(n, &edges, None).unwrap()
    }

    #[test]
    fn single_edge_degrees() {
        let hg = Hypergraph::new(3, &[vec![0, 1, 2]], None).unwrap();
        assert_eq!(hg.node_degrees(), &[1.0, 1.0, 1.0]);
        assert_eq!(hg.edge_degree(0), 3);
    }

    #[test]
    fn citeseer_shape() {
        let n = 1778;
        let edges: Vec<Vec<usize>> = (0..2118).map(|j| vec![j % n, (j * 7 + 1) % n]).collect();
        let hg = Hypergraph::new(n, &edges, None).unwrap();
        assert_eq!(hg.num_nodes(), 1778);
        assert_eq!(hg.num_edges(), 2118);
        assert_eq!(hg.mean_edge_size(), 2.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Hypergraph::new(3, &[vec![0], vec![]], None),
            Err(Error::EmptyHyperedge { edge: 1 })
        ));
        assert!(matches!(
            Hypergraph::new(3, &[vec![0, 3]], None),
            Err(Error::NodeIdOutOfRange { id: 3, .. })
        ));
        assert!(matches!(
            Hypergraph::new(3, &[vec![0]], Some(vec![0.0])),
            Err(Error::NonPositiveWeight { edge: 0, .. })
        ));
        assert!(matches!(
            Hypergraph::new(3, &[vec![0]], Some(vec![1.0, 2.0])),
            Err(Error::WeightCountMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_hyperedges_stay_distinct() {
        let hg = Hypergraph::new(2, &[vec![0, 1], vec![1, 0]], Some(vec![1.0, 2.5])).unwrap();
        assert_eq!(hg.num_edges(), 2);
        assert_eq!(hg.node_degree(0), 3.5);
    }

    #[test]
    fn degrees_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 5;
            let edges: Vec<Vec<usize>> = (0..4)
                .map(|_| {
                    let k = rng.random_range(1..=n);
                    (0..k).map(|_| rng.random_range(0..n)).collect()
                })
                .collect();
            let weights: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
            let hg = Hypergraph::new(n, &edges, Some(weights.clone())).unwrap();
            // dense incidence from the raw input
            let mut dense = vec![vec![0u8; 4]; n];
            for (j, e) in edges.iter().enumerate() {
                for &v in e {
                    dense[v][j] = 1;
                }
            }
            for v in 0..n {
                let d: f64 = (0..4).map(|j| weights[j] * dense[v][j] as f64).sum();
                assert!((hg.node_degree(v) - d).abs() < 1e-12);
            }
            for j in 0..4 {
                let delta: usize = (0..n).map(|v| dense[v][j] as usize).sum();
                assert_eq!(hg.edge_degree(j), delta);
            }
            let lhs: f64 = hg.node_degrees().iter().sum();
            let rhs: f64 = (0..4).map(|j| weights[j] * hg.edge_degree(j) as f64).sum();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn neighbors_basic() {
        let hg = Hypergraph::new(4, &[vec![0, 1, 2]], None).unwrap();
        assert_eq!(hg.one_hop_neighbors(0).unwrap(), vec![1, 2]);
        assert!(hg.one_hop_neighbors(3).unwrap().is_empty());
        assert!(matches!(
            hg.one_hop_neighbors(4),
            Err(Error::NodeIdOutOfRange { .. })
        ));
    }

    #[test]
    fn neighbors_match_membership_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let hg = random_hypergraph(&mut rng, 8, 6, 4);
            let edges = hg.hyperedges();
            for v in 0..8 {
                let mut expected = BTreeSet::new();
                for e in &edges {
                    if e.contains(&v) {
                        expected.extend(e.iter().copied().filter(|&u| u != v));
                    }
                }
                let got = hg.one_hop_neighbors(v).unwrap();
                assert_eq!(got, expected.into_iter().collect::<Vec<_>>());
                assert!(!got.contains(&v));
            }
        }
    }

    #[test]
    fn s_adjacency_matches_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let hg = random_hypergraph(&mut rng, 9, 10, 5);
            for s in 1..=3 {
                for e in 0..10 {
                    let a: BTreeSet<usize> = hg.members(e).iter().copied().collect();
                    let expected: Vec<usize> = (0..10)
                        .filter(|&f| f != e)
                        .filter(|&f| hg.members(f).iter().filter(|v| a.contains(v)).count() >= s)
                        .collect();
                    assert_eq!(hg.s_adjacent_hyperedges(e, s).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn s_adjacency_errors_and_large_s() {
        let hg = Hypergraph::new(4, &[vec![0, 1], vec![1, 2, 3]], None).unwrap();
        assert!(matches!(hg.s_adjacent_hyperedges(0, 0), Err(Error::InvalidS(0))));
        assert!(matches!(
            hg.s_adjacent_hyperedges(2, 1),
            Err(Error::HyperedgeIdOutOfRange { .. })
        ));
        for e in 0..2 {
            assert!(hg.s_adjacent_hyperedges(e, 4).unwrap().is_empty());
        }
    }

    #[test]
    fn masking_and_restriction() {
        let hg = Hypergraph::new(4, &[vec![0, 1, 2], vec![2, 3]], None).unwrap();
        let inc = hg.incidence();
        let masked = inc.masked(&[true, false, true, false, false]);
        assert_eq!(masked.members(0), &[0, 2]);
        assert!(masked.members(1).is_empty());
        assert_eq!(masked.edges_of(3), &[] as &[usize]);
        let sub = inc.restrict(&[2, 3], &[1]);
        assert_eq!(sub.num_nodes(), 2);
        assert_eq!(sub.members(0), &[0, 1]);
    }

    #[test]
    fn pairwise_graph_validation() {
        assert!(matches!(PairwiseGraph::new(3, &[(1, 1)]), Err(Error::SelfLoop(1))));
        assert!(matches!(
            PairwiseGraph::new(3, &[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge(0, 1))
        ));
        let g = PairwiseGraph::new(3, &[(2, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn labels_validate_class_range() {
        assert!(NodeLabels::new(vec![Some(0), Some(2)], 2).is_err());
        let l = NodeLabels::from_labels(vec![Some(0), None, Some(3)]);
        assert_eq!(l.num_classes(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_hypergraph() -> impl Strategy<Value = Hypergraph> {
            (2usize..10).prop_flat_map(|n| {
                proptest::collection::vec(proptest::collection::vec(0..n, 1..5), 1..8)
                    .prop_map(move |edges| Hypergraph::new(n, &edges, None).unwrap())
            })
        }

        proptest! {
            #[test]
            fn s_adjacency_symmetric_and_monotone(hg in arb_hypergraph(), s in 1usize..4) {
                for e in 0..hg.num_edges() {
                    let at_s = hg.s_adjacent_hyperedges(e, s).unwrap();
                    let at_next = hg.s_adjacent_hyperedges(e, s + 1).unwrap();
                    prop_assert!(at_next.iter().all(|f| at_s.contains(f)));
                    for &f in &at_s {
                        prop_assert!(hg.s_adjacent_hyperedges(f, s).unwrap().contains(&e));
                    }
                }
            }

            #[test]
            fn node_never_its_own_neighbor(hg in arb_hypergraph()) {
                for v in 0..hg.num_nodes() {
                    prop_assert!(!hg.one_hop_neighbors(v).unwrap().contains(&v));
                }
            }
        }
    }
}
