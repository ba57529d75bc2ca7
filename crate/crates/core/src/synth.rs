//! Seeded generator for block-structured text-attributed hypergraphs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeLabels};
use crate::rng::{stream_rng, Stream};
use crate::text::TextCorpus;

/// Generator parameters. Defaults give the 200-node two-block fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n: usize,
    pub blocks: usize,
    /// Hyperedge size.
    pub k: usize,
    /// Intra-block hyperedges.
    pub m_in: usize,
    /// Cross-block noise hyperedges.
    pub m_cross: usize,
    /// Tokens per node text.
    pub text_len: usize,
    /// Tokens in each block's private vocabulary.
    pub block_vocab: usize,
    /// Tokens in the vocabulary shared by all blocks.
    pub shared_vocab: usize,
    /// Probability that a token comes from the node's block vocabulary.
    pub purity: f64,
    /// Intra-block hyperedges are drawn inside groups of this many nodes.
    pub community_size: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n: 200,
            blocks: 2,
            k: 4,
            m_in: 120,
            m_cross: 12,
            text_len: 20,
            block_vocab: 10,
            shared_vocab: 20,
            purity: 0.15,
            community_size: 50,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.blocks < 2 {
            return bad("need at least two blocks");
        }
        if self.n < self.blocks * self.k.max(1) {
            return bad("every block needs at least k nodes");
        }
        if self.k < 2 {
            return bad("hyperedge size k must be at least 2");
        }
        if self.m_in == 0 {
            return bad("m_in must be positive");
        }
        if self.text_len == 0 || self.block_vocab == 0 {
            return bad("text length and block vocabulary must be positive");
        }
        if !(0.0..=1.0).contains(&self.purity) {
            return bad("purity must lie in [0, 1]");
        }
        if self.purity < 1.0 && self.shared_vocab == 0 {
            return bad("purity below 1 needs a shared vocabulary");
        }
        if self.community_size < self.k {
            return bad("community_size must be at least k");
        }
        Ok(())
    }
}

/// Block id of every node: contiguous, near-equal blocks.
pub fn block_of(p: &SynthParams, v: usize) -> usize {
    v * p.blocks / p.n
}

pub fn generate(p: &SynthParams) -> Result<Dataset> {
    p.validate()?;
    let mut rng = stream_rng(p.seed, Stream::Synth, 0);
    let members: Vec<Vec<usize>> = (0..p.blocks)
        .map(|b| (0..p.n).filter(|&v| block_of(p, v) == b).collect())
        .collect();
    let mut communities: Vec<Vec<Vec<usize>>> = Vec::with_capacity(p.blocks);
    for block in &members {
        let mut order = block.clone();
        order.shuffle(&mut rng);
        let groups = (order.len() / p.community_size).max(1);
        let mut split: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, v) in order.into_iter().enumerate() {
            split[i % groups].push(v);
        }
        communities.push(split);
    }
    let mut edges = Vec::with_capacity(p.m_in + p.m_cross);
    // Covering hyperedges first so that, budget permitting, no node is left
    // outside every intra-block hyperedge.
    let mut cover: Vec<Vec<usize>> = Vec::new();
    let per_block: Vec<Vec<Vec<usize>>> = communities
        .iter()
        .map(|comms| {
            let mut out = Vec::new();
            for comm in comms {
                for chunk in comm.chunks(p.k) {
                    let mut e = chunk.to_vec();
                    let pool: Vec<usize> = comm.iter().copied().filter(|v| !e.contains(v)).collect();
                    e.extend(pool.choose_multiple(&mut rng, p.k - e.len()));
                    out.push(e);
                }
            }
            out
        })
        .collect();
    let longest = per_block.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..longest {
        for block in &per_block {
            if let Some(e) = block.get(i) {
                cover.push(e.clone());
            }
        }
    }
    cover.truncate(p.m_in);
    let covered = cover.len();
    edges.extend(cover);
    for i in covered..p.m_in {
        let comm = communities[i % p.blocks].choose(&mut rng).expect("non-empty");
        edges.push(comm.choose_multiple(&mut rng, p.k).copied().collect::<Vec<_>>());
    }
    for _ in 0..p.m_cross {
        let (a, b) = {
            let a = rng.random_range(0..p.blocks);
            let b = (a + rng.random_range(1..p.blocks)) % p.blocks;
            (a, b)
        };
        let from_a = p.k / 2;
        let mut e: Vec<usize> = members[a].choose_multiple(&mut rng, from_a).copied().collect();
        e.extend(members[b].choose_multiple(&mut rng, p.k - from_a));
        edges.push(e);
    }
    let texts = (0..p.n)
        .map(|v| {
            let b = block_of(p, v);
            (0..p.text_len)
                .map(|_| {
                    if rng.random_bool(p.purity) {
                        format!("b{}t{}", b, rng.random_range(0..p.block_vocab))
                    } else {
                        format!("w{}", rng.random_range(0..p.shared_vocab))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let hg = Hypergraph::new(p.n, &edges, None)?;
    let labels = NodeLabels::new((0..p.n).map(|v| Some(block_of(p, v))).collect(), p.blocks)?;
    Dataset::new(hg, TextCorpus::new(texts), labels)
}
