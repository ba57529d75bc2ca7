//! Text embedding providers and structure-aware pretraining of the text
//! encoder.
//!
//! The built-in encoder is a hashed bag of word n-grams (L2-normalized)
//! followed by a trainable affine projection. Pretraining pulls each node's
//! embedding toward the mean of its 1-hop neighbors and away from the mean of
//! every other node, using a cosine triplet hinge.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::linalg::{cosine, cosine_grads};
use crate::optim::Adam;
use crate::rng::{stream_rng, Stream};

/// One text per node, aligned with node ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextCorpus(Vec<String>);

impl TextCorpus {
    pub fn new(texts: Vec<String>) -> Self {
        Self(texts)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, v: usize) -> &str {
        &self.0[v]
    }

    pub fn texts(&self) -> &[String] {
        &self.0
    }

    pub fn check_aligned(&self, hg: &Hypergraph) -> Result<()> {
        if self.len() != hg.num_nodes() {
            return Err(Error::CorpusMismatch {
                expected: hg.num_nodes(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Anything that maps node-aligned texts to a dense feature matrix.
///
/// Row `i` of the result belongs to node `i`; `texts[i]` is that node's
/// (possibly augmented) text.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_texts(&self, texts: &[String]) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub output_dim: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub hash_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 4096,
            output_dim: 64,
            min_n: 1,
            max_n: 2,
            hash_seed: 0x5eed_7a6c,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        if self.min_n == 0 || self.min_n > self.max_n {
            return Err(Error::InvalidConfig(format!(
                "invalid n-gram range ({}, {})",
                self.min_n, self.max_n
            )));
        }
        Ok(())
    }
}

/// Sparse L2-normalized n-gram bag: sorted bucket indices with weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HashedBag {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl HashedBag {
    pub fn dot(&self, other: &HashedBag) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Built-in hashed n-gram encoder with a trainable projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    config: EncoderConfig,
    projection: Array2<f64>,
    bias: Array1<f64>,
}

impl TextEncoder {
    /// Uniform(-1/sqrt(B), 1/sqrt(B)) initialization of projection and bias.
    pub fn init<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (config.feature_dim as f64).sqrt();
        let projection = Array2::from_shape_simple_fn((config.feature_dim, config.output_dim), || {
            rng.random_range(-bound..bound)
        });
        let bias = Array1::from_shape_simple_fn(config.output_dim, || rng.random_range(-bound..bound));
        Ok(Self {
            config,
            projection,
            bias,
        })
    }

    pub fn from_parts(config: EncoderConfig, projection: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        config.validate()?;
        if projection.dim() != (config.feature_dim, config.output_dim) || bias.len() != config.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "projection {:?} / bias {} do not match config {}x{}",
                projection.dim(),
                bias.len(),
                config.feature_dim,
                config.output_dim
            )));
        }
        if projection.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("text encoder parameters".into()));
        }
        Ok(Self {
            config,
            projection,
            bias,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn projection_mut(&mut self) -> &mut Array2<f64> {
        &mut self.projection
    }

    pub fn bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.bias
    }

    /// Bucket of one n-gram given as its tokens.
    pub fn bucket_of(&self, ngram: &[&str]) -> usize {
        let mut h = self.config.hash_seed ^ FNV_OFFSET;
        for (i, tok) in ngram.iter().enumerate() {
            if i > 0 {
                h = (h ^ 0x20).wrapping_mul(FNV_PRIME);
            }
            for b in tok.bytes() {
                h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
            }
        }
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        ((h as u128 * self.config.feature_dim as u128) >> 64) as usize
    }

    /// Hashed, L2-normalized n-gram bag of `text` (empty for no tokens).
    pub fn bag(&self, text: &str) -> HashedBag {
        let tokens = tokenize(text);
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let mut buckets = Vec::new();
        for n in self.config.min_n..=self.config.max_n {
            if n > refs.len() {
                break;
            }
            for window in refs.windows(n) {
                buckets.push(self.bucket_of(window));
            }
        }
        buckets.sort_unstable();
        let mut bag = HashedBag::default();
        for b in buckets {
            if bag.indices.last() == Some(&b) {
                *bag.values.last_mut().unwrap() += 1.0;
            } else {
                bag.indices.push(b);
                bag.values.push(1.0);
            }
        }
        let norm = bag.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            bag.values.iter_mut().for_each(|x| *x /= norm);
        }
        bag
    }

    /// Projects a precomputed bag: `bag^T P + b`.
    pub fn project(&self, bag: &HashedBag) -> Array1<f64> {
        let mut out = self.bias.clone();
        for (&i, &w) in bag.indices.iter().zip(&bag.values) {
            out.scaled_add(w, &self.projection.row(i));
        }
        out
    }

    pub fn embed_text(&self, text: &str) -> Array1<f64> {
        self.project(&self.bag(text))
    }

    fn project_all(&self, bags: &[HashedBag]) -> Array2<f64> {
        let mut out = Array2::zeros((bags.len(), self.config.output_dim));
        for (mut row, bag) in out.outer_iter_mut().zip(bags) {
            row.assign(&self.project(bag));
        }
        out
    }

    /// FNV-style checksum over the parameter bits, used to assert the frozen
    /// encoder is untouched.
    pub fn checksum(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for x in self.projection.iter().chain(self.bias.iter()) {
            h = (h ^ x.to_bits()).wrapping_mul(FNV_PRIME);
        }
        h
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"HITECTE1")?;
        let c = &self.config;
        for v in [c.feature_dim, c.output_dim, c.min_n, c.max_n] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&c.hash_seed.to_le_bytes())?;
        for x in self.projection.iter().chain(self.bias.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"HITECTE1" {
            return Err(Error::Format("bad text-encoder magic".into()));
        }
        let mut u = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let feature_dim = u()? as usize;
        let output_dim = u()? as usize;
        let min_n = u()? as usize;
        let max_n = u()? as usize;
        let hash_seed = u()?;
        let config = EncoderConfig {
            feature_dim,
            output_dim,
            min_n,
            max_n,
            hash_seed,
        };
        config.validate()?;
        let projection = read_f64_block(r, feature_dim * output_dim)?;
        let bias = read_f64_block(r, output_dim)?;
        Self::from_parts(
            config,
            Array2::from_shape_vec((feature_dim, output_dim), projection)
                .map_err(|e| Error::Format(e.to_string()))?,
            Array1::from(bias),
        )
    }
}

pub(crate) fn read_f64_block<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

impl EmbeddingProvider for TextEncoder {
    fn dim(&self) -> usize {
        self.config.output_dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Array2<f64>> {
        let rows: Vec<Array1<f64>> = texts.par_iter().map(|t| self.embed_text(t)).collect();
        let mut out = Array2::zeros((texts.len(), self.config.output_dim));
        for (mut dst, src) in out.outer_iter_mut().zip(rows) {
            dst.assign(&src);
        }
        Ok(out)
    }
}

/// Externally computed node features, used as-is regardless of text.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEmbeddings {
    table: Array2<f64>,
}

impl FrozenEmbeddings {
    pub fn new(table: Array2<f64>) -> Result<Self> {
        if table.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("imported embeddings".into()));
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_embeddings(path)?)
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }
}

impl EmbeddingProvider for FrozenEmbeddings {
    fn dim(&self) -> usize {
        self.table.ncols()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Array2<f64>> {
        if texts.len() != self.table.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} texts for a table of {} rows",
                texts.len(),
                self.table.nrows()
            )));
        }
        Ok(self.table.clone())
    }
}

const EMBEDDING_MAGIC: &[u8; 8] = b"TAHGEMB1";

/// Writes `TAHGEMB1`, u64 rows, u64 cols, then row-major little-endian f32.
pub fn write_embeddings(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for x in m.iter() {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 24 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("{} is not a TAHGEMB1 file", path.display())));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(Error::Format(format!(
            "expected {rows}x{cols} f32 payload, found {} bytes",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

/// Anchor, positive and negative embeddings with the hinge margin.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchor: Array1<f64>,
    pub positive: Array1<f64>,
    pub negative: Array1<f64>,
    pub margin: f64,
}

/// `max(0, cos(x, x-) - cos(x, x+) + m)`.
pub fn triplet_loss(b: &TripletBatch) -> Result<f64> {
    let d = b.anchor.len();
    if b.positive.len() != d || b.negative.len() != d {
        return Err(Error::DimensionMismatch("triplet vectors differ in length".into()));
    }
    let pos = cosine(b.anchor.view(), b.positive.view()).ok_or(Error::ZeroVector)?;
    let neg = cosine(b.anchor.view(), b.negative.view()).ok_or(Error::ZeroVector)?;
    Ok((neg - pos + b.margin).max(0.0))
}

/// Mean over the 1-hop neighbors (positive) and over the remaining nodes
/// (negative) for one node.
///
/// The negative mean is the global row sum minus the anchor and neighbor
/// rows. With `include_anchor` the anchor stays in the negative set.
pub fn positive_negative_pools(
    hg: &Hypergraph,
    embeddings: &Array2<f64>,
    v: usize,
    include_anchor: bool,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if embeddings.nrows() != hg.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for {} nodes",
            embeddings.nrows(),
            hg.num_nodes()
        )));
    }
    let neighbors = hg.one_hop_neighbors(v)?;
    let total = embeddings.sum_axis(Axis(0));
    pools_from_sum(embeddings, &total, v, &neighbors, include_anchor)
}

fn negative_count(n: usize, num_neighbors: usize, include_anchor: bool) -> usize {
    n - num_neighbors - usize::from(!include_anchor)
}

fn pools_from_sum(
    x: &Array2<f64>,
    total: &Array1<f64>,
    v: usize,
    neighbors: &[usize],
    include_anchor: bool,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if neighbors.is_empty() {
        return Err(Error::NoPositivePool { node: v });
    }
    let neg_count = negative_count(x.nrows(), neighbors.len(), include_anchor);
    if neg_count == 0 {
        return Err(Error::NoNegativePool { node: v });
    }
    let mut pos = Array1::zeros(x.ncols());
    for &u in neighbors {
        pos += &x.row(u);
    }
    let mut neg = total - &pos;
    if !include_anchor {
        neg -= &x.row(v);
    }
    pos /= neighbors.len() as f64;
    neg /= neg_count as f64;
    Ok((pos, neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
    pub margin: f64,
    /// Anchors per optimizer step; 0 means one full-batch step per epoch.
    pub batch_size: usize,
    /// Keep the anchor itself in its negative pool.
    pub include_anchor_in_negatives: bool,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 1e-3,
            margin: 0.5,
            batch_size: 32,
            include_anchor_in_negatives: false,
        }
    }
}

/// Stage-1 objective over a fixed corpus: bags are hashed once, embeddings
/// and pools are recomputed from the current parameters on every call.
pub struct StructureObjective<'a> {
    hg: &'a Hypergraph,
    bags: Vec<HashedBag>,
    neighbors: Vec<Vec<usize>>,
    eligible: Vec<usize>,
    margin: f64,
    include_anchor: bool,
}

/// Loss with gradients for the projection and bias.
#[derive(Debug, Clone)]
pub struct Stage1Grad {
    pub loss: f64,
    pub projection: Array2<f64>,
    pub bias: Array1<f64>,
}

impl<'a> StructureObjective<'a> {
    pub fn new(
        enc: &TextEncoder,
        hg: &'a Hypergraph,
        corpus: &TextCorpus,
        margin: f64,
        include_anchor: bool,
    ) -> Result<Self> {
        corpus.check_aligned(hg)?;
        let bags: Vec<HashedBag> = corpus.texts().par_iter().map(|t| enc.bag(t)).collect();
        let neighbors = hg.neighbor_lists();
        let n = hg.num_nodes();
        let eligible: Vec<usize> = (0..n)
            .filter(|&v| {
                !neighbors[v].is_empty() && negative_count(n, neighbors[v].len(), include_anchor) > 0
            })
            .collect();
        if eligible.is_empty() {
            return Err(Error::NoEligibleNodes);
        }
        Ok(Self {
            hg,
            bags,
            neighbors,
            eligible,
            margin,
            include_anchor,
        })
    }

    /// Nodes that have both a positive and a negative pool.
    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    /// Mean triplet loss over all eligible nodes.
    pub fn loss(&self, enc: &TextEncoder) -> Result<f64> {
        Ok(self.loss_and_grad(enc, &self.eligible)?.loss)
    }

    /// Mean triplet loss over `anchors` and its exact gradient, including the
    /// dependence of both pools on every node's embedding.
    pub fn loss_and_grad(&self, enc: &TextEncoder, anchors: &[usize]) -> Result<Stage1Grad> {
        let x = enc.project_all(&self.bags);
        let n = self.hg.num_nodes();
        let d = x.ncols();
        let total = x.sum_axis(Axis(0));
        let mut grad_x = Array2::<f64>::zeros((n, d));
        let mut broadcast = Array1::<f64>::zeros(d);
        let scale = 1.0 / anchors.len() as f64;
        let mut loss = 0.0;
        for &v in anchors {
            let nbrs = &self.neighbors[v];
            let (pos, neg) = pools_from_sum(&x, &total, v, nbrs, self.include_anchor)?;
            let anchor = x.row(v);
            let (cp, ga_p, gp) = cosine_grads(anchor, pos.view()).ok_or(Error::ZeroVector)?;
            let (cn, ga_n, gn) = cosine_grads(anchor, neg.view()).ok_or(Error::ZeroVector)?;
            let hinge = cn - cp + self.margin;
            if hinge <= 0.0 {
                continue;
            }
            loss += hinge * scale;
            // d/dx_v of (cos(x, neg) - cos(x, pos))
            let mut gv = &ga_n - &ga_p;
            gv *= scale;
            grad_x.row_mut(v).scaled_add(1.0, &gv);
            let pos_share = -scale / nbrs.len() as f64;
            for &u in nbrs {
                grad_x.row_mut(u).scaled_add(pos_share, &gp);
            }
            let neg_share = scale / negative_count(n, nbrs.len(), self.include_anchor) as f64;
            broadcast.scaled_add(neg_share, &gn);
            for &u in nbrs {
                grad_x.row_mut(u).scaled_add(-neg_share, &gn);
            }
            if !self.include_anchor {
                grad_x.row_mut(v).scaled_add(-neg_share, &gn);
            }
        }
        grad_x += &broadcast;
        let mut grad_p = Array2::<f64>::zeros(enc.projection.dim());
        for (bag, g) in self.bags.iter().zip(grad_x.outer_iter()) {
            for (&i, &w) in bag.indices.iter().zip(&bag.values) {
                grad_p.row_mut(i).scaled_add(w, &g);
            }
        }
        let grad_b = grad_x.sum_axis(Axis(0));
        Ok(Stage1Grad {
            loss,
            projection: grad_p,
            bias: grad_b,
        })
    }
}

/// Result of stage-1 training.
#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub encoder: TextEncoder,
    pub initial_loss: f64,
    /// Full-objective loss after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains the projection with Adam on the structure-aware triplet objective.
pub fn pretrain_text_encoder(
    enc: &TextEncoder,
    hg: &Hypergraph,
    corpus: &TextCorpus,
    cfg: &Stage1Config,
    seed: u64,
) -> Result<Stage1Outcome> {
    let objective = StructureObjective::new(enc, hg, corpus, cfg.margin, cfg.include_anchor_in_negatives)?;
    let mut enc = enc.clone();
    let initial_loss = objective.loss(&enc)?;
    let mut adam = Adam::new(cfg.lr, 0.0, enc.projection.len() + enc.bias.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order = objective.eligible().to_vec();
    let batch = if cfg.batch_size == 0 { order.len() } else { cfg.batch_size };
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(seed, Stream::TextPretrain, epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let g = objective.loss_and_grad(&enc, chunk)?;
            if !g.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: "stage-1 triplet loss".into(),
                });
            }
            let grads: Vec<f64> = g.projection.iter().chain(g.bias.iter()).copied().collect();
            let mut params: Vec<f64> = enc.projection.iter().chain(enc.bias.iter()).copied().collect();
            adam.step(&mut params, &grads);
            let split = enc.projection.len();
            enc.projection
                .iter_mut()
                .zip(&params[..split])
                .for_each(|(p, &x)| *p = x);
            enc.bias.iter_mut().zip(&params[split..]).for_each(|(p, &x)| *p = x);
        }
        let loss = objective.loss(&enc)?;
        log::debug!("stage1 epoch {epoch}: L_t = {loss:.6}");
        trace.push(loss);
    }
    Ok(Stage1Outcome {
        encoder: enc,
        initial_loss,
        loss_trace: trace,
    })
}
