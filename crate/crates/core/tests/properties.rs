//! Property tests for the structural and numerical invariants.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hitec::augment::{cohesiveness, drop_probability, sample_view_structure};
use hitec::clique::reconstruct_from_graph;
use hitec::eval::{cns_negative, EvalReport, SplitSpec};
use hitec::hgnn::{encode, HgnnConfig, HgnnParams};
use hitec::hypergraph::{Hypergraph, PairwiseGraph};
use hitec::objectives::{info_nce, symmetric_info_nce};
use hitec::sampling::s_walk;
use hitec::text::{positive_negative_pools, triplet_loss, TripletBatch};

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let len = pairs.len();
        proptest::collection::vec(any::<bool>(), len).prop_map(move |keep| {
            let edges = pairs.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
            (n, edges)
        })
    })
}

fn arb_hypergraph() -> impl Strategy<Value = Hypergraph> {
    (3usize..10).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::btree_set(0..n, 1..5), 1..9).prop_map(move |sets| {
            let edges: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
            Hypergraph::new(n, &edges, None).unwrap()
        })
    })
}

fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
        .prop_filter("rows must be nonzero", |m| {
            m.outer_iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        })
}

fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstructed_sets_are_maximal_cliques_covering_every_edge((n, edges) in arb_graph()) {
        let g = PairwiseGraph::new(n, &edges).unwrap();
        let cliques = reconstruct_from_graph(&g);
        for c in &cliques {
            prop_assert!(c.len() >= 2);
            for (i, &u) in c.iter().enumerate() {
                for &v in &c[i + 1..] {
                    prop_assert!(g.has_edge(u, v));
                }
            }
        }
        for (i, a) in cliques.iter().enumerate() {
            let a: BTreeSet<_> = a.iter().collect();
            for (j, b) in cliques.iter().enumerate() {
                if i != j {
                    let b: BTreeSet<_> = b.iter().collect();
                    prop_assert!(!a.is_subset(&b));
                }
            }
        }
        for &(u, v) in &edges {
            prop_assert!(cliques.iter().any(|c| c.contains(&u) && c.contains(&v)));
        }
    }

    #[test]
    fn degree_sum_equals_weighted_edge_sizes(hg in arb_hypergraph(), scale in 0.1f64..3.0) {
        let edges = hg.hyperedges();
        let weights: Vec<f64> = (0..edges.len()).map(|j| scale * (1.0 + j as f64)).collect();
        let weighted = Hypergraph::new(hg.num_nodes(), &edges, Some(weights.clone())).unwrap();
        let lhs: f64 = weighted.node_degrees().iter().sum();
        let rhs: f64 = edges.iter().zip(&weights).map(|(e, w)| w * e.len() as f64).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }

    #[test]
    fn pools_equal_direct_means(hg in arb_hypergraph(), seed in 0u64..1000, include_anchor in any::<bool>()) {
        let x = random_features(hg.num_nodes(), 3, seed);
        for v in 0..hg.num_nodes() {
            let Ok((pos, neg)) = positive_negative_pools(&hg, &x, v, include_anchor) else { continue };
            let nbrs: BTreeSet<usize> = hg.edges_of(v).iter().flat_map(|&e| hg.members(e).iter().copied()).filter(|&u| u != v).collect();
            let rest: Vec<usize> = (0..hg.num_nodes()).filter(|u| !nbrs.contains(u) && (include_anchor || *u != v)).collect();
            for k in 0..3 {
                let p = nbrs.iter().map(|&u| x[[u, k]]).sum::<f64>() / nbrs.len() as f64;
                let q = rest.iter().map(|&u| x[[u, k]]).sum::<f64>() / rest.len() as f64;
                prop_assert!((pos[k] - p).abs() <= 1e-12);
                prop_assert!((neg[k] - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn triplet_hinge_is_bounded(
        a in proptest::collection::vec(-3.0f64..3.0, 4),
        p in proptest::collection::vec(-3.0f64..3.0, 4),
        q in proptest::collection::vec(-3.0f64..3.0, 4),
        margin in 0.0f64..2.0,
    ) {
        let b = TripletBatch { anchor: a.into(), positive: p.into(), negative: q.into(), margin };
        if let Ok(l) = triplet_loss(&b) {
            prop_assert!((0.0..=2.0 + margin).contains(&l));
        }
    }

    #[test]
    fn cohesiveness_lies_in_unit_interval(hg in arb_hypergraph(), seed in 0u64..1000) {
        let x = random_features(hg.num_nodes(), 4, seed);
        for e in 0..hg.num_edges() {
            let s = cohesiveness(&hg, &x, e, false).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn drop_probability_is_strictly_decreasing(s in -1.0f64..1.0, ds in 1e-3f64..1.0, tau in 0.05f64..2.0) {
        let (hi, lo) = (drop_probability(s, tau), drop_probability(s + ds, tau));
        prop_assert!(lo < hi);
        prop_assert!(drop_probability(1e6, tau) < 1e-12);
        prop_assert!(drop_probability(-1e6, tau) > 1.0 - 1e-12);
    }

    #[test]
    fn masked_incidence_is_a_subset(hg in arb_hypergraph(), p in 0.0f64..1.0, seed in 0u64..1000) {
        let probs = vec![p; hg.incidence().nnz()];
        let view = sample_view_structure(&hg, &probs, &mut ChaCha8Rng::seed_from_u64(seed));
        let original: BTreeSet<(usize, usize)> = hg.incidence().iter().collect();
        for pair in view.incidence.iter() {
            prop_assert!(original.contains(&pair));
        }
    }

    #[test]
    fn hgnn_is_permutation_equivariant(hg in arb_hypergraph(), seed in 0u64..1000, shift in 1usize..9) {
        let n = hg.num_nodes();
        let perm: Vec<usize> = (0..n).map(|v| (v + shift) % n).collect();
        let x = random_features(n, 3, seed);
        let mut xp = Array2::zeros(x.dim());
        for v in 0..n {
            xp.row_mut(perm[v]).assign(&x.row(v));
        }
        let edges: Vec<Vec<usize>> = hg.hyperedges().iter().map(|e| e.iter().map(|&v| perm[v]).collect()).collect();
        let hp = Hypergraph::new(n, &edges, None).unwrap();
        let cfg = HgnnConfig { hidden_dim: 4, output_dim: 4, ..HgnnConfig::default() };
        let params = HgnnParams::init(3, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = encode(hg.incidence(), &x, hg.weights(), &params).unwrap();
        let b = encode(hp.incidence(), &xp, hp.weights(), &params).unwrap();
        for v in 0..n {
            for k in 0..4 {
                prop_assert!((a.z_v[[v, k]] - b.z_v[[perm[v], k]]).abs() <= 1e-10);
            }
        }
        for e in 0..hg.num_edges() {
            for k in 0..4 {
                prop_assert!((a.z_e[[e, k]] - b.z_e[[e, k]]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn info_nce_is_nonnegative_symmetric_and_scale_free(
        z1 in arb_matrix(5, 3),
        z2 in arb_matrix(5, 3),
        scales in proptest::collection::vec(0.1f64..10.0, 5),
        tau in 0.1f64..2.0,
    ) {
        prop_assert!(info_nce(&z1, &z2, tau).unwrap() >= 0.0);
        let ab = symmetric_info_nce(&z1, &z2, tau).unwrap();
        let ba = symmetric_info_nce(&z2, &z1, tau).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        let mut scaled = z1.clone();
        for (mut row, s) in scaled.outer_iter_mut().zip(&scales) {
            row *= *s;
        }
        prop_assert!((info_nce(&scaled, &z2, tau).unwrap() - info_nce(&z1, &z2, tau).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn s_walks_respect_overlap_and_membership(hg in arb_hypergraph(), s in 1usize..3, l in 1usize..5, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for center in 0..hg.num_nodes() {
            let Ok(sample) = s_walk(&hg, center, s, l, &mut rng) else {
                prop_assert!(hg.edges_of(center).is_empty());
                continue;
            };
            let seq = &sample.hyperedge_seq;
            prop_assert!(!seq.is_empty() && seq.len() <= l);
            prop_assert!(hg.members(seq[0]).contains(&center));
            for w in seq.windows(2) {
                let a: BTreeSet<_> = hg.members(w[0]).iter().collect();
                let shared = hg.members(w[1]).iter().filter(|v| a.contains(v)).count();
                prop_assert!(shared >= s);
            }
            let union: BTreeSet<usize> = seq.iter().flat_map(|&e| hg.members(e).iter().copied()).collect();
            prop_assert_eq!(sample.node_set.clone(), union.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn splits_partition_and_repeat(n in 5usize..300, k in 0usize..20, seed in 0u64..100) {
        let spec = SplitSpec::node_classification(seed);
        let (tr, va, te) = spec.split(n, k, 0).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(spec.split(n, k, 0).unwrap(), (tr, va, te));
    }

    #[test]
    fn cns_negatives_are_valid(hg in arb_hypergraph(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let existing: BTreeSet<Vec<usize>> = hg.hyperedges().into_iter().map(|mut e| { e.sort_unstable(); e }).collect();
        for e in 0..hg.num_edges() {
            let Ok(neg) = cns_negative(&hg, e, &mut rng) else { continue };
            let members = hg.members(e);
            prop_assert_eq!(neg.len(), members.len());
            let added: Vec<usize> = neg.iter().copied().filter(|v| !members.contains(v)).collect();
            prop_assert_eq!(added.len(), 1);
            let v = added[0];
            for &u in neg.iter().filter(|&&u| u != v) {
                prop_assert!(hg.edges_of(v).iter().any(|&f| hg.members(f).contains(&u)));
            }
            let mut sorted = neg.clone();
            sorted.sort_unstable();
            prop_assert!(!existing.contains(&sorted));
        }
    }

    #[test]
    fn report_statistics_are_recomputable(scores in proptest::collection::vec(0.0f64..100.0, 1..50)) {
        let r = EvalReport::from_scores("node_classification", scores.clone());
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!((r.mean - mean).abs() <= 1e-12 * mean.max(1.0));
        prop_assert!((r.std - std).abs() <= 1e-9);
        prop_assert!(r.is_consistent());
    }
}
