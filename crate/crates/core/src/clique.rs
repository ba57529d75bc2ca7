//! Maximal-clique hypergraph reconstruction.
//!
//! Bron–Kerbosch with Tomita pivoting, with the outer loop driven by a
//! degeneracy ordering (Eppstein–Löffler–Strash).

use crate::hypergraph::PairwiseGraph;

/// Every maximal clique of size >= 2, each sorted ascending, the list sorted
/// lexicographically (equivalently: by smallest member, then lexicographic).
pub fn reconstruct_from_graph(g: &PairwiseGraph) -> Vec<Vec<usize>> {
    let order = degeneracy_order(g);
    let mut position = vec![0usize; g.num_nodes()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut cliques = Vec::new();
    for &v in &order {
        let nbrs = g.neighbors(v);
        let p: Vec<usize> = nbrs.iter().copied().filter(|&u| position[u] > position[v]).collect();
        let x: Vec<usize> = nbrs.iter().copied().filter(|&u| position[u] < position[v]).collect();
        let mut r = vec![v];
        expand(g, &mut r, p, x, &mut cliques);
    }
    for c in &mut cliques {
        c.sort_unstable();
    }
    cliques.retain(|c| c.len() >= 2);
    cliques.sort();
    cliques
}

fn expand(
    g: &PairwiseGraph,
    r: &mut Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(r.clone());
        }
        return;
    }
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| (intersect_count(&p, g.neighbors(u)), std::cmp::Reverse(u)))
        .expect("p is non-empty");
    let candidates: Vec<usize> = p
        .iter()
        .copied()
        .filter(|&u| !g.has_edge(pivot, u))
        .collect();
    for v in candidates {
        let nv = g.neighbors(v);
        r.push(v);
        expand(g, r, intersect(&p, nv), intersect(&x, nv), out);
        r.pop();
        p.retain(|&u| u != v);
        let at = x.partition_point(|&u| u < v);
        x.insert(at, v);
    }
}

// Both inputs sorted ascending.
fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn intersect_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Repeatedly removes a minimum-degree vertex (ties: smallest id).
fn degeneracy_order(g: &PairwiseGraph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut degree: Vec<usize> = (0..n).map(|v| g.neighbors(v).len()).collect();
    let mut removed = vec![false; n];
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(usize, usize)>> =
        (0..n).map(|v| std::cmp::Reverse((degree[v], v))).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse((d, v))) = heap.pop() {
        if removed[v] || d != degree[v] {
            continue;
        }
        removed[v] = true;
        order.push(v);
        for &u in g.neighbors(v) {
            if !removed[u] {
                degree[u] -= 1;
                heap.push(std::cmp::Reverse((degree[u], u)));
            }
        }
    }
    order
}
