//! Hierarchical contrastive pretraining on text-attributed hypergraphs.
//!
//! Two stages: a text encoder is first trained so that node embeddings
//! agree with their hypergraph neighborhood, then a single-layer HGNN is
//! trained on two semantically augmented views with node-, hyperedge- and
//! subgraph-level InfoNCE objectives.

pub mod augment;
pub mod clique;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hgnn;
pub mod hypergraph;
pub mod linalg;
pub mod objectives;
pub mod optim;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
pub use hypergraph::{Hypergraph, Incidence, NodeLabels, PairwiseGraph};
