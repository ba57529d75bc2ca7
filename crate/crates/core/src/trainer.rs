//! Two-stage training driver: configuration, stage 1, stage 2, checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentedView, DropConfig, DropMode, PromptConfig, ViewGenerator};
use crate::error::{Error, Result};
use crate::hgnn::{hgnn_forward, HgnnConfig, HgnnParams};
use crate::hypergraph::Hypergraph;
use crate::objectives::{hierarchical_loss, InfoNceConfig, LossBreakdown, LossWeights, ObjectiveConfig};
use crate::optim::Adam;
use crate::rng::{stream_rng, Stream};
use crate::sampling::{s_walk_with, select_anchor_nodes, NodeSetMode, SubgraphSample};
use crate::text::{
    pretrain_text_encoder, read_f64_block, EmbeddingProvider, EncoderConfig, Stage1Config, TextCorpus, TextEncoder,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub tau_n: f64,
    pub tau_e: f64,
    pub tau_s: f64,
    pub lambda_e: f64,
    pub lambda_s: f64,
    pub s: usize,
    pub walk_len: usize,
    /// Percentage of nodes used as subgraph anchors.
    pub anchor_ratio: f64,
    pub node_set_mode: NodeSetMode,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            weight_decay: 0.0,
            tau_n: 0.5,
            tau_e: 0.5,
            tau_s: 0.5,
            lambda_e: 1.0,
            lambda_s: 1.0,
            s: 1,
            walk_len: 4,
            anchor_ratio: 30.0,
            node_set_mode: NodeSetMode::Union,
        }
    }
}

impl Stage2Config {
    pub fn temperatures(&self) -> InfoNceConfig {
        InfoNceConfig {
            tau_n: self.tau_n,
            tau_e: self.tau_e,
            tau_s: self.tau_s,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_e: self.lambda_e,
            lambda_s: self.lambda_s,
        }
    }
}

/// Ablation switches, one per variant in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// "w/o pre": skip text-encoder pretraining.
    pub disable_stage1_pretrain: bool,
    /// "w/o shd": uniform drop at the mean semantic drop rate.
    pub random_drop_instead_of_semantic: bool,
    /// "w/o s": no subgraph-level loss.
    pub disable_subgraph_loss: bool,
    /// "w/o prompt": view 1 uses the raw text.
    pub disable_prompt: bool,
    pub disable_domain: bool,
    pub disable_topology: bool,
    pub disable_context: bool,
}

impl AblationFlags {
    /// Parses an ablation name such as `w/o pre` or `wo_shd`.
    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase().replace("w/o", "wo").replace([' ', '-'], "_");
        let mut f = Self::default();
        match key.as_str() {
            "full" | "none" => {}
            "wo_pre" => f.disable_stage1_pretrain = true,
            "wo_shd" => f.random_drop_instead_of_semantic = true,
            "wo_s" => f.disable_subgraph_loss = true,
            "wo_prompt" => f.disable_prompt = true,
            "wo_domain" => f.disable_domain = true,
            "wo_topology" => f.disable_topology = true,
            "wo_context" => f.disable_context = true,
            _ => return Err(Error::InvalidConfig(format!("unknown ablation '{name}'"))),
        }
        Ok(f)
    }

    /// Display name: `full`, a single variant such as `w/o shd`, or several
    /// joined with `+`.
    pub fn name(&self) -> String {
        let parts: Vec<&str> = [
            (self.disable_stage1_pretrain, "w/o pre"),
            (self.random_drop_instead_of_semantic, "w/o shd"),
            (self.disable_subgraph_loss, "w/o s"),
            (self.disable_prompt, "w/o prompt"),
            (self.disable_domain, "w/o domain"),
            (self.disable_topology, "w/o topology"),
            (self.disable_context, "w/o context"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub hgnn: HgnnConfig,
    pub prompt: PromptConfig,
    pub drop: DropConfig,
    pub ablation: AblationFlags,
    /// When set, `lambda_e` and `lambda_s` must come from this list.
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            encoder: EncoderConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            hgnn: HgnnConfig::default(),
            prompt: PromptConfig::default(),
            drop: DropConfig::default(),
            ablation: AblationFlags::default(),
            lambda_grid: None,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.prompt.validate()?;
        let s1 = &self.stage1;
        positive("stage1.lr", s1.lr)?;
        if !(s1.margin.is_finite() && s1.margin >= 0.0) {
            return Err(Error::InvalidConfig(format!("stage1.margin must be >= 0, got {}", s1.margin)));
        }
        let s2 = &self.stage2;
        positive("stage2.lr", s2.lr)?;
        for (name, t) in [("tau_n", s2.tau_n), ("tau_e", s2.tau_e), ("tau_s", s2.tau_s)] {
            if !(t > 0.0) {
                return Err(Error::NonPositiveTemperature(t));
            }
            positive(name, t)?;
        }
        if !(s2.weight_decay.is_finite() && s2.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("stage2.weight_decay must be >= 0".into()));
        }
        s2.loss_weights().validate()?;
        if s2.s == 0 {
            return Err(Error::InvalidS(0));
        }
        if s2.walk_len == 0 {
            return Err(Error::InvalidConfig("stage2.walk_len must be at least 1".into()));
        }
        if !(s2.anchor_ratio > 0.0 && s2.anchor_ratio <= 100.0) {
            return Err(Error::InvalidRatio(s2.anchor_ratio));
        }
        positive("drop.tau_drop", self.drop.tau_drop)?;
        if self.hgnn.hidden_dim == 0 || self.hgnn.output_dim == 0 || self.hgnn.num_layers == 0 {
            return Err(Error::InvalidConfig("hgnn dimensions must be positive".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            for (name, x) in [("lambda_e", s2.lambda_e), ("lambda_s", s2.lambda_s)] {
                if !grid.contains(&x) {
                    return Err(Error::InvalidConfig(format!("{name} = {x} is not in the lambda grid")));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Prompt configuration with the prompt ablations applied.
    pub fn effective_prompt(&self) -> PromptConfig {
        let a = &self.ablation;
        let mut p = self.prompt.clone();
        if a.disable_prompt {
            p.include_domain = false;
            p.include_topology = false;
            p.include_context = false;
        }
        p.include_domain &= !a.disable_domain;
        p.include_topology &= !a.disable_topology;
        p.include_context &= !a.disable_context;
        p
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            temperatures: self.stage2.temperatures(),
            weights: self.stage2.loss_weights(),
            use_subgraph: !self.ablation.disable_subgraph_loss,
        }
    }
}

/// Seeded, untrained text encoder.
pub fn initial_encoder(cfg: &RunConfig) -> Result<TextEncoder> {
    TextEncoder::init(cfg.encoder, &mut stream_rng(cfg.seed, Stream::TextInit, 0))
}

/// Stage 1. With `disable_stage1_pretrain` the seeded initialization is returned.
pub fn run_stage1(cfg: &RunConfig, hg: &Hypergraph, corpus: &TextCorpus) -> Result<(TextEncoder, Vec<f64>)> {
    let enc = initial_encoder(cfg)?;
    if cfg.ablation.disable_stage1_pretrain {
        return Ok((enc, Vec::new()));
    }
    let out = pretrain_text_encoder(&enc, hg, corpus, &cfg.stage1, cfg.seed)?;
    Ok((out.encoder, out.loss_trace))
}

/// One row of the stage-2 loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("epoch,L_n,L_e,L_s,L\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.loss.node, r.loss.edge, r.loss.subgraph, r.loss.total
        ));
    }
    out
}

/// Mutable state of stage 2; everything needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2State {
    pub params: HgnnParams,
    pub adam: Adam,
    pub epoch: usize,
    pub trace: Vec<TraceRow>,
}

/// Stage-2 driver with the text encoder held fixed.
pub struct Stage2Trainer<'a> {
    cfg: RunConfig,
    hg: &'a Hypergraph,
    generator: ViewGenerator<'a>,
    adjacency: Vec<Vec<usize>>,
    anchors: Vec<usize>,
    state: Stage2State,
}

impl<'a> Stage2Trainer<'a> {
    pub fn new(
        cfg: &RunConfig,
        hg: &'a Hypergraph,
        corpus: &'a TextCorpus,
        provider: &'a dyn EmbeddingProvider,
    ) -> Result<Self> {
        cfg.validate()?;
        let prompt = cfg.effective_prompt();
        let mut generator = ViewGenerator::new(hg, corpus, provider, prompt.clone(), &cfg.drop, DropMode::Semantic)?;
        if cfg.ablation.random_drop_instead_of_semantic {
            let p = generator.mean_drop_probability();
            generator = ViewGenerator::new(hg, corpus, provider, prompt, &cfg.drop, DropMode::Uniform(p))?;
        }
        let use_subgraph = !cfg.ablation.disable_subgraph_loss;
        let (adjacency, anchors) = if use_subgraph {
            let anchors: Vec<usize> = select_anchor_nodes(hg, cfg.stage2.anchor_ratio)?
                .into_iter()
                .filter(|&v| !hg.edges_of(v).is_empty())
                .collect();
            (hg.s_adjacency_lists(cfg.stage2.s)?, anchors)
        } else {
            (Vec::new(), Vec::new())
        };
        let input_dim = generator.original_features().ncols();
        let params = HgnnParams::init(input_dim, &cfg.hgnn, &mut stream_rng(cfg.seed, Stream::HgnnInit, 0))?;
        let adam = Adam::new(cfg.stage2.lr, cfg.stage2.weight_decay, params.num_values());
        Ok(Self {
            cfg: cfg.clone(),
            hg,
            generator,
            adjacency,
            anchors,
            state: Stage2State {
                params,
                adam,
                epoch: 0,
                trace: Vec::new(),
            },
        })
    }

    /// Replaces the current state, e.g. from a checkpoint.
    pub fn restore(&mut self, state: Stage2State) -> Result<()> {
        if state.params.num_values() != self.state.params.num_values()
            || state.params.input_dim() != self.state.params.input_dim()
        {
            return Err(Error::DimensionMismatch("checkpoint does not match the configured HGNN".into()));
        }
        self.state = state;
        Ok(())
    }

    pub fn state(&self) -> &Stage2State {
        &self.state
    }

    pub fn into_state(self) -> Stage2State {
        self.state
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn generator(&self) -> &ViewGenerator<'a> {
        &self.generator
    }

    /// Walks drawn for `epoch`, on the original hypergraph.
    pub fn samples_for_epoch(&self, epoch: usize) -> Result<Vec<SubgraphSample>> {
        let mut rng = stream_rng(self.cfg.seed, Stream::Walks, epoch as u64);
        self.anchors
            .iter()
            .map(|&v| {
                s_walk_with(
                    self.hg,
                    &self.adjacency,
                    v,
                    self.cfg.stage2.walk_len,
                    self.cfg.stage2.node_set_mode,
                    &mut rng,
                )
            })
            .collect()
    }

    /// Mean hyperedge count of the walks drawn over the first `epochs`
    /// epochs; zero when no subgraph is sampled.
    pub fn mean_subgraph_hyperedges(&self, epochs: usize) -> Result<f64> {
        let (mut total, mut count) = (0usize, 0usize);
        for e in 0..epochs {
            for sample in self.samples_for_epoch(e)? {
                total += sample.hyperedge_seq.len();
                count += 1;
            }
        }
        Ok(if count == 0 { 0.0 } else { total as f64 / count as f64 })
    }

    /// Views drawn for `epoch`.
    pub fn views_for_epoch(&self, epoch: usize) -> Result<(AugmentedView, AugmentedView)> {
        self.generator
            .generate(&mut stream_rng(self.cfg.seed, Stream::Views, epoch as u64))
    }

    /// Runs one epoch: fresh views, fresh walks, one Adam step.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let epoch = self.state.epoch;
        let (v1, v2) = self.views_for_epoch(epoch)?;
        let samples = self.samples_for_epoch(epoch)?;
        let (loss, grad) = hierarchical_loss(
            &v1,
            &v2,
            self.hg.weights(),
            &samples,
            &self.state.params,
            &self.cfg.objective(),
            true,
        )?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!(
                    "L_n={} L_e={} L_s={} L={}",
                    loss.node, loss.edge, loss.subgraph, loss.total
                ),
            });
        }
        let grad = grad.expect("gradient requested").to_flat();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "non-finite gradient".into(),
            });
        }
        let mut flat = self.state.params.to_flat();
        self.state.adam.step(&mut flat, &grad);
        self.state.params.assign_flat(&flat);
        self.state.trace.push(TraceRow { epoch, loss });
        self.state.epoch += 1;
        log::debug!("stage2 epoch {epoch}: L = {:.6}", loss.total);
        Ok(loss)
    }

    /// Trains until `cfg.stage2.epochs` epochs have run in total.
    pub fn run_to_end(&mut self) -> Result<()> {
        self.run_until(self.cfg.stage2.epochs)
    }

    pub fn run_until(&mut self, epoch: usize) -> Result<()> {
        while self.state.epoch < epoch.min(self.cfg.stage2.epochs) {
            self.step()?;
        }
        Ok(())
    }
}

/// Stage 2 from scratch; returns the final state.
pub fn run_stage2(
    cfg: &RunConfig,
    hg: &Hypergraph,
    corpus: &TextCorpus,
    provider: &dyn EmbeddingProvider,
) -> Result<Stage2State> {
    let mut trainer = Stage2Trainer::new(cfg, hg, corpus, provider)?;
    trainer.run_to_end()?;
    Ok(trainer.into_state())
}

/// Inference on the unaugmented hypergraph: `(Z_V, Z_E)`.
pub fn embed_nodes(
    hg: &Hypergraph,
    corpus: &TextCorpus,
    provider: &dyn EmbeddingProvider,
    params: &HgnnParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    corpus.check_aligned(hg)?;
    let x = provider.embed_texts(corpus.texts())?;
    let view = AugmentedView::identity(hg, x);
    let out = hgnn_forward(&view, params, hg.weights())?;
    Ok((out.z_v, out.z_e))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HITECCK1";

/// Text encoder, HGNN parameters, optimizer state, epoch and config hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub encoder: TextEncoder,
    pub stage2: Stage2State,
}

fn put_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    put_u64(w, xs.len() as u64)?;
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_f64s<R: Read>(r: &mut R, limit: usize) -> Result<Vec<f64>> {
    let len = get_u64(r)? as usize;
    if len > limit {
        return Err(Error::Format(format!("block of {len} values exceeds limit {limit}")));
    }
    read_f64_block(r, len)
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let hash = self.config_hash.as_bytes();
        put_u64(w, hash.len() as u64)?;
        w.write_all(hash)?;
        put_u64(w, self.stage2.epoch as u64)?;
        self.encoder.write_to(w)?;
        self.stage2.params.write_to(w)?;
        let adam = &self.stage2.adam;
        for x in [adam.lr, adam.beta1, adam.beta2, adam.eps, adam.weight_decay] {
            w.write_all(&x.to_le_bytes())?;
        }
        let (step, m, v) = adam.state();
        put_u64(w, step)?;
        put_f64s(w, m)?;
        put_f64s(w, v)?;
        put_u64(w, self.stage2.trace.len() as u64)?;
        for row in &self.stage2.trace {
            put_u64(w, row.epoch as u64)?;
            let l = &row.loss;
            for x in [l.node, l.edge, l.subgraph, l.total] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let hash_len = get_u64(r)? as usize;
        if hash_len > 1024 {
            return Err(Error::Format("config hash too long".into()));
        }
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let config_hash = String::from_utf8(hash).map_err(|e| Error::Format(e.to_string()))?;
        let epoch = get_u64(r)? as usize;
        let encoder = TextEncoder::read_from(r)?;
        let params = HgnnParams::read_from(r)?;
        let n = params.num_values();
        let hyper = read_f64_block(r, 5)?;
        let step = get_u64(r)?;
        let m = get_f64s(r, n)?;
        let v = get_f64s(r, n)?;
        if m.len() != n || v.len() != n {
            return Err(Error::Format("optimizer state does not match parameter count".into()));
        }
        let mut adam = Adam::new(hyper[0], hyper[4], n);
        adam.beta1 = hyper[1];
        adam.beta2 = hyper[2];
        adam.eps = hyper[3];
        adam.restore(step, m, v);
        let rows = get_u64(r)? as usize;
        if rows > epoch {
            return Err(Error::Format("loss trace longer than epoch counter".into()));
        }
        let mut trace = Vec::with_capacity(rows);
        for _ in 0..rows {
            let e = get_u64(r)? as usize;
            let l = read_f64_block(r, 4)?;
            trace.push(TraceRow {
                epoch: e,
                loss: LossBreakdown {
                    node: l[0],
                    edge: l[1],
                    subgraph: l[2],
                    total: l[3],
                },
            });
        }
        Ok(Self {
            config_hash,
            encoder,
            stage2: Stage2State {
                params,
                adam,
                epoch,
                trace,
            },
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Errors unless the checkpoint was produced under `cfg`.
    pub fn check_config(&self, cfg: &RunConfig) -> Result<()> {
        let expected = cfg.hash();
        if self.config_hash != expected {
            return Err(Error::InvalidConfig(format!(
                "checkpoint config hash {} does not match {}",
                self.config_hash, expected
            )));
        }
        Ok(())
    }
}

/// Result of the full two-stage pipeline.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub encoder: TextEncoder,
    pub stage1_trace: Vec<f64>,
    pub stage2: Stage2State,
    pub node_embeddings: Array2<f64>,
    pub config_hash: String,
}

impl PipelineOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config_hash.clone(),
            encoder: self.encoder.clone(),
            stage2: self.stage2.clone(),
        }
    }
}

/// Stage 1, stage 2 and inference in one call. Fails if stage 2 changed the
/// text encoder.
pub fn run_pipeline(cfg: &RunConfig, hg: &Hypergraph, corpus: &TextCorpus) -> Result<PipelineOutcome> {
    let (encoder, stage1_trace) = run_stage1(cfg, hg, corpus)?;
    let before = encoder.checksum();
    let stage2 = run_stage2(cfg, hg, corpus, &encoder)?;
    if encoder.checksum() != before {
        return Err(Error::InvariantViolation("text encoder changed during stage 2".into()));
    }
    let (node_embeddings, _) = embed_nodes(hg, corpus, &encoder, &stage2.params)?;
    Ok(PipelineOutcome {
        encoder,
        stage1_trace,
        stage2,
        node_embeddings,
        config_hash: cfg.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::tests::walk_fixture;

    fn corpus(n: usize) -> TextCorpus {
        TextCorpus::new(
            (0..n)
                .map(|i| format!("token{} shared word{} group{}", i, i % 3, i % 2))
                .collect(),
        )
    }

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.encoder.feature_dim = 128;
        cfg.encoder.output_dim = 8;
        cfg.hgnn.hidden_dim = 6;
        cfg.hgnn.output_dim = 5;
        cfg.stage1.epochs = 3;
        cfg.stage2.epochs = 6;
        cfg.stage2.s = 2;
        cfg
    }

    #[test]
    fn ablation_names_round_trip() {
        for name in ["full", "w/o pre", "w/o shd", "w/o s", "w/o prompt"] {
            assert_eq!(AblationFlags::from_name(name).unwrap().name(), name);
        }
    }

    #[test]
    fn config_round_trip_and_hash() {
        let cfg = small_cfg();
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(other.hash(), cfg.hash());
        assert!(RunConfig::from_toml_str("seed = 3\n[stage2]\ntau_n = 0.0\n").is_err());
        assert!(RunConfig::from_toml_str("[stage2]\nbogus = 1\n").is_err());
        let partial = RunConfig::from_toml_str("seed = 9\n[stage2]\nepochs = 7\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.stage2.epochs, 7);
        assert_eq!(partial.stage2.lr, 1e-3);
    }

    #[test]
    fn lambda_grid_enforced() {
        let mut cfg = small_cfg();
        cfg.lambda_grid = Some(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(cfg.validate().is_ok());
        cfg.stage2.lambda_s = 2.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ablation_names() {
        assert!(AblationFlags::from_name("w/o pre").unwrap().disable_stage1_pretrain);
        assert!(AblationFlags::from_name("wo_shd").unwrap().random_drop_instead_of_semantic);
        assert!(AblationFlags::from_name("w/o s").unwrap().disable_subgraph_loss);
        assert!(AblationFlags::from_name("w/o topology").unwrap().disable_topology);
        assert_eq!(AblationFlags::from_name("full").unwrap(), AblationFlags::default());
        assert!(AblationFlags::from_name("w/o everything").is_err());
        let mut cfg = small_cfg();
        cfg.ablation.disable_prompt = true;
        assert!(cfg.effective_prompt().is_identity());
    }

    #[test]
    fn stage1_ablation_returns_init() {
        let hg = walk_fixture();
        let mut cfg = small_cfg();
        cfg.ablation.disable_stage1_pretrain = true;
        let (enc, trace) = run_stage1(&cfg, &hg, &corpus(10)).unwrap();
        assert_eq!(enc, initial_encoder(&cfg).unwrap());
        assert!(trace.is_empty());
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let hg = walk_fixture();
        let c = corpus(10);
        let mut cfg = small_cfg();
        cfg.stage2.epochs = 0;
        let enc = initial_encoder(&cfg).unwrap();
        let state = run_stage2(&cfg, &hg, &c, &enc).unwrap();
        let init = HgnnParams::init(8, &cfg.hgnn, &mut stream_rng(cfg.seed, Stream::HgnnInit, 0)).unwrap();
        assert_eq!(state.params, init);
        assert!(state.trace.is_empty());
    }

    #[test]
    fn identical_views_without_extra_levels_give_log_n() {
        let hg = walk_fixture();
        let n = hg.num_nodes();
        let c = TextCorpus::new(vec!["same text".to_string(); n]);
        let mut cfg = small_cfg();
        cfg.stage2.lambda_e = 0.0;
        cfg.stage2.lambda_s = 0.0;
        cfg.stage2.epochs = 1;
        cfg.ablation.disable_prompt = true;
        cfg.ablation.disable_subgraph_loss = true;
        cfg.drop.tau_drop = 1e-9;
        let enc = initial_encoder(&cfg).unwrap();
        let mut trainer = Stage2Trainer::new(&cfg, &hg, &c, &enc).unwrap();
        assert!(trainer.generator().drop_probabilities().iter().all(|&p| p == 0.0));
        let loss = trainer.step().unwrap();
        assert!((loss.node - (n as f64).ln()).abs() < 1e-9);
        assert_eq!(loss.total, loss.node);
    }

    #[test]
    fn deterministic_and_resumable() {
        let hg = walk_fixture();
        let c = corpus(10);
        let cfg = small_cfg();
        let a = run_pipeline(&cfg, &hg, &c).unwrap();
        let b = run_pipeline(&cfg, &hg, &c).unwrap();
        assert_eq!(a.checkpoint().to_bytes().unwrap(), b.checkpoint().to_bytes().unwrap());
        assert_eq!(a.stage2.trace.len(), cfg.stage2.epochs);

        let mut first = Stage2Trainer::new(&cfg, &hg, &c, &a.encoder).unwrap();
        first.run_until(3).unwrap();
        let ck = Checkpoint {
            config_hash: cfg.hash(),
            encoder: a.encoder.clone(),
            stage2: first.state().clone(),
        };
        let loaded = Checkpoint::read_from(&mut ck.to_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(loaded, ck);
        loaded.check_config(&cfg).unwrap();
        let mut resumed = Stage2Trainer::new(&cfg, &hg, &c, &loaded.encoder).unwrap();
        resumed.restore(loaded.stage2).unwrap();
        resumed.run_to_end().unwrap();
        assert_eq!(resumed.state(), &a.stage2);
    }

    #[test]
    fn embed_matches_forward_on_identity_view() {
        let hg = walk_fixture();
        let c = corpus(10);
        let cfg = small_cfg();
        let enc = initial_encoder(&cfg).unwrap();
        let params = HgnnParams::init(8, &cfg.hgnn, &mut stream_rng(1, Stream::HgnnInit, 0)).unwrap();
        let (z1, e1) = embed_nodes(&hg, &c, &enc, &params).unwrap();
        let (z2, _) = embed_nodes(&hg, &c, &enc, &params).unwrap();
        assert_eq!(z1, z2);
        let view = AugmentedView::identity(&hg, enc.embed_texts(c.texts()).unwrap());
        let out = hgnn_forward(&view, &params, hg.weights()).unwrap();
        assert_eq!(out.z_v, z1);
        assert_eq!(out.z_e, e1);
    }

    #[test]
    fn trace_csv_shape() {
        let rows = vec![TraceRow {
            epoch: 0,
            loss: LossBreakdown {
                node: 1.0,
                edge: 2.0,
                subgraph: 3.0,
                total: 6.0,
            },
        }];
        assert_eq!(trace_to_csv(&rows), "epoch,L_n,L_e,L_s,L\n0,1,2,3,6\n");
    }
}
