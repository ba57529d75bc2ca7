//! Semantic-aware view generation.
//!
//! View 1 embeds a prompt-augmented text (original text plus domain,
//! topology and neighbor-context sections); view 2 keeps the original text.
//! Both views then drop node–hyperedge incidences independently, with a drop
//! probability that falls as the hyperedge's semantic cohesiveness rises.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, Incidence};
use crate::text::{EmbeddingProvider, TextCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub domain_text: String,
    pub max_neighbor_snippets: usize,
    pub snippet_len: usize,
    pub include_domain: bool,
    pub include_topology: bool,
    pub include_context: bool,
    pub domain_header: String,
    pub topology_header: String,
    pub context_header: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            domain_text: String::new(),
            max_neighbor_snippets: 3,
            snippet_len: 80,
            include_domain: true,
            include_topology: true,
            include_context: true,
            domain_header: "Domain:".into(),
            topology_header: "Topology:".into(),
            context_header: "Context:".into(),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snippet_len == 0 {
            return Err(Error::InvalidConfig("snippet_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        !(self.include_domain || self.include_topology || self.include_context)
    }
}

/// Renders the augmented text for node `v`.
pub fn build_prompt<R: Rng>(
    v: usize,
    hg: &Hypergraph,
    corpus: &TextCorpus,
    cfg: &PromptConfig,
    rng: &mut R,
) -> Result<String> {
    if v >= hg.num_nodes() {
        return Err(Error::NodeIdOutOfRange {
            id: v,
            num_nodes: hg.num_nodes(),
        });
    }
    let mut out = corpus.get(v).to_string();
    let mut section = |header: &str, body: &str| {
        out.push('\n');
        out.push_str(header);
        out.push(' ');
        out.push_str(body);
    };
    if cfg.include_domain && !cfg.domain_text.is_empty() {
        section(&cfg.domain_header, &cfg.domain_text);
    }
    if cfg.include_topology {
        let sizes: Vec<String> = hg
            .edges_of(v)
            .iter()
            .map(|&e| hg.edge_degree(e).to_string())
            .collect();
        let body = if sizes.is_empty() {
            format!("degree {}", hg.node_degree(v))
        } else {
            format!(
                "degree {}; hyperedge sizes {}",
                hg.node_degree(v),
                sizes.join(", ")
            )
        };
        section(&cfg.topology_header, &body);
    }
    if cfg.include_context && cfg.max_neighbor_snippets > 0 {
        let neighbors = hg.neighbors_unchecked(v);
        if !neighbors.is_empty() {
            let take = cfg.max_neighbor_snippets.min(neighbors.len());
            let picked = rand::seq::index::sample(rng, neighbors.len(), take);
            let snippets: Vec<String> = picked
                .iter()
                .map(|i| corpus.get(neighbors[i]).chars().take(cfg.snippet_len).collect())
                .collect();
            section(&cfg.context_header, &snippets.join(" | "));
        }
    }
    Ok(out)
}

/// Mean pairwise cosine similarity of the members of `e`.
///
/// Singletons score 1. A zero feature row is an error unless `lenient`, in
/// which case its similarities count as 0.
pub fn cohesiveness(hg: &Hypergraph, x: &Array2<f64>, e: usize, lenient: bool) -> Result<f64> {
    if e >= hg.num_edges() {
        return Err(Error::HyperedgeIdOutOfRange {
            id: e,
            num_edges: hg.num_edges(),
        });
    }
    let members = hg.members(e);
    let k = members.len();
    if k == 1 {
        return Ok(1.0);
    }
    // sum_{i<j} <u_i, u_j> = (|sum u_i|^2 - sum |u_i|^2) / 2 over unit rows u_i
    let mut sum = ndarray::Array1::<f64>::zeros(x.ncols());
    let mut self_terms = 0.0;
    for &v in members {
        let row = x.row(v);
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            if lenient {
                continue;
            }
            return Err(Error::ZeroFeatureRow { node: v });
        }
        sum.scaled_add(1.0 / norm, &row);
        self_terms += 1.0;
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let s = (sum.dot(&sum) - self_terms) / 2.0 / pairs;
    Ok(s.clamp(-1.0, 1.0))
}

/// Cohesiveness of every hyperedge.
pub fn cohesiveness_scores(hg: &Hypergraph, x: &Array2<f64>, lenient: bool) -> Result<Vec<f64>> {
    if x.nrows() != hg.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} nodes",
            x.nrows(),
            hg.num_nodes()
        )));
    }
    (0..hg.num_edges())
        .into_par_iter()
        .map(|e| cohesiveness(hg, x, e, lenient))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropConfig {
    pub tau_drop: f64,
}

impl Default for DropConfig {
    fn default() -> Self {
        Self { tau_drop: 0.1 }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 - sigmoid((s(e) - 0.5) / tau)` for one hyperedge score.
pub fn drop_probability(score: f64, tau_drop: f64) -> f64 {
    1.0 - sigmoid((score - 0.5) / tau_drop)
}

/// Drop probability for every incidence, in column-major incidence order.
pub fn drop_probabilities(hg: &Hypergraph, scores: &[f64], cfg: &DropConfig) -> Result<Vec<f64>> {
    if !(cfg.tau_drop > 0.0) {
        return Err(Error::NonPositiveTemperature(cfg.tau_drop));
    }
    if scores.len() != hg.num_edges() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} hyperedges",
            scores.len(),
            hg.num_edges()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput(format!("cohesiveness score {s}")));
    }
    let mut probs = Vec::with_capacity(hg.incidence().nnz());
    for (e, &s) in scores.iter().enumerate() {
        let p = drop_probability(s, cfg.tau_drop);
        probs.extend(std::iter::repeat_n(p, hg.edge_degree(e)));
    }
    Ok(probs)
}

/// Mask and masked incidence of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewStructure {
    /// Keep flag per incidence of the original hypergraph (column-major).
    pub mask: Vec<bool>,
    pub incidence: Incidence,
}

/// Independent Bernoulli keep decision per incidence with probability
/// `1 - p_drop`.
pub fn sample_view_structure<R: Rng>(hg: &Hypergraph, probs: &[f64], rng: &mut R) -> ViewStructure {
    assert_eq!(probs.len(), hg.incidence().nnz(), "one probability per incidence");
    let mask: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() >= p).collect();
    let incidence = hg.incidence().masked(&mask);
    ViewStructure { mask, incidence }
}

/// Features plus masked structure for one contrastive view.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub features: Array2<f64>,
    pub incidence: Incidence,
    pub mask: Vec<bool>,
}

impl AugmentedView {
    /// The unaugmented view `(X, H)`.
    pub fn identity(hg: &Hypergraph, features: Array2<f64>) -> Self {
        Self {
            features,
            incidence: hg.incidence().clone(),
            mask: vec![true; hg.incidence().nnz()],
        }
    }
}

/// How incidences are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropMode {
    /// Cohesiveness-guided drop.
    Semantic,
    /// Same probability for every incidence.
    Uniform(f64),
    /// Keep everything.
    Disabled,
}

/// Precomputes everything that stays fixed across epochs: original-text
/// features, cohesiveness scores and per-incidence drop probabilities.
pub struct ViewGenerator<'a> {
    hg: &'a Hypergraph,
    corpus: &'a TextCorpus,
    provider: &'a dyn EmbeddingProvider,
    prompt: PromptConfig,
    original: Array2<f64>,
    scores: Vec<f64>,
    probs: Vec<f64>,
}

impl<'a> ViewGenerator<'a> {
    pub fn new(
        hg: &'a Hypergraph,
        corpus: &'a TextCorpus,
        provider: &'a dyn EmbeddingProvider,
        prompt: PromptConfig,
        drop: &DropConfig,
        mode: DropMode,
    ) -> Result<Self> {
        corpus.check_aligned(hg)?;
        prompt.validate()?;
        let original = provider.embed_texts(corpus.texts())?;
        let scores = cohesiveness_scores(hg, &original, true)?;
        let probs = match mode {
            DropMode::Semantic => drop_probabilities(hg, &scores, drop)?,
            DropMode::Uniform(p) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!("uniform drop rate {p}")));
                }
                vec![p; hg.incidence().nnz()]
            }
            DropMode::Disabled => vec![0.0; hg.incidence().nnz()],
        };
        Ok(Self {
            hg,
            corpus,
            provider,
            prompt,
            original,
            scores,
            probs,
        })
    }

    pub fn original_features(&self) -> &Array2<f64> {
        &self.original
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn drop_probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Mean per-incidence drop probability.
    pub fn mean_drop_probability(&self) -> f64 {
        if self.probs.is_empty() {
            return 0.0;
        }
        self.probs.iter().sum::<f64>() / self.probs.len() as f64
    }

    pub fn prompted_features<R: Rng>(&self, rng: &mut R) -> Result<Array2<f64>> {
        if self.prompt.is_identity() {
            return Ok(self.original.clone());
        }
        let prompts = (0..self.hg.num_nodes())
            .map(|v| build_prompt(v, self.hg, self.corpus, &self.prompt, rng))
            .collect::<Result<Vec<_>>>()?;
        self.provider.embed_texts(&prompts)
    }

    /// Draws one (prompted, original) view pair.
    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<(AugmentedView, AugmentedView)> {
        let features1 = self.prompted_features(rng)?;
        let s1 = sample_view_structure(self.hg, &self.probs, rng);
        let s2 = sample_view_structure(self.hg, &self.probs, rng);
        Ok((
            AugmentedView {
                features: features1,
                incidence: s1.incidence,
                mask: s1.mask,
            },
            AugmentedView {
                features: self.original.clone(),
                incidence: s2.incidence,
                mask: s2.mask,
            },
        ))
    }
}

/// One-shot view pair with semantic drop.
pub fn make_views<R: Rng>(
    hg: &Hypergraph,
    corpus: &TextCorpus,
    provider: &dyn EmbeddingProvider,
    prompt: &PromptConfig,
    drop: &DropConfig,
    rng: &mut R,
) -> Result<(AugmentedView, AugmentedView)> {
    ViewGenerator::new(hg, corpus, provider, prompt.clone(), drop, DropMode::Semantic)?.generate(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{EncoderConfig, TextEncoder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Hypergraph, TextCorpus) {
        let hg = Hypergraph::new(5, &[vec![0, 1, 2], vec![2, 3]], None).unwrap();
        let corpus = TextCorpus::new(
            ["alpha beta", "gamma delta", "epsilon", "zeta eta theta", "lonely"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        (hg, corpus)
    }

    #[test]
    fn prompt_sections() {
        let (hg, corpus) = toy();
        let cfg = PromptConfig {
            domain_text: "citation network".into(),
            ..PromptConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = build_prompt(2, &hg, &corpus, &cfg, &mut rng).unwrap();
        assert!(p.starts_with("epsilon\nDomain: citation network\nTopology: degree 2; hyperedge sizes 3, 2\nContext: "));
        let lonely = build_prompt(4, &hg, &corpus, &cfg, &mut rng).unwrap();
        assert_eq!(lonely, "lonely\nDomain: citation network\nTopology: degree 0");
        assert!(!lonely.contains("Context:"));
        let off = PromptConfig {
            include_domain: false,
            include_topology: false,
            include_context: false,
            ..cfg
        };
        assert_eq!(build_prompt(0, &hg, &corpus, &off, &mut rng).unwrap(), "alpha beta");
        assert!(matches!(
            build_prompt(5, &hg, &corpus, &off, &mut rng),
            Err(Error::NodeIdOutOfRange { .. })
        ));
    }

    #[test]
    fn prompt_is_deterministic_and_truncates() {
        let (hg, corpus) = toy();
        let cfg = PromptConfig {
            max_neighbor_snippets: 2,
            snippet_len: 3,
            ..PromptConfig::default()
        };
        let a = build_prompt(2, &hg, &corpus, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = build_prompt(2, &hg, &corpus, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let ctx = a.split("Context: ").nth(1).unwrap();
        assert_eq!(ctx.split(" | ").count(), 2);
        assert!(ctx.split(" | ").all(|s| s.chars().count() <= 3));
    }

    #[test]
    fn cohesiveness_cases() {
        let hg = Hypergraph::new(4, &[vec![0, 1], vec![2, 3], vec![0]], None).unwrap();
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 1.0, 2.0, 2.0, 1.0, 0.0, 0.0, 3.0]).unwrap();
        assert!((cohesiveness(&hg, &x, 0, false).unwrap() - 1.0).abs() < 1e-15);
        assert!(cohesiveness(&hg, &x, 1, false).unwrap().abs() < 1e-15);
        assert_eq!(cohesiveness(&hg, &x, 2, false).unwrap(), 1.0);
        let mut z = x.clone();
        z.row_mut(3).fill(0.0);
        assert!(matches!(
            cohesiveness(&hg, &z, 1, false),
            Err(Error::ZeroFeatureRow { node: 3 })
        ));
        assert_eq!(cohesiveness(&hg, &z, 1, true).unwrap(), 0.0);
    }

    #[test]
    fn cohesiveness_matches_pairwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hg = Hypergraph::new(6, &[vec![0, 2, 3, 5]], None).unwrap();
        for _ in 0..50 {
            let x = Array2::from_shape_simple_fn((6, 5), || rng.random_range(-1.0f64..1.0));
            let m = [0usize, 2, 3, 5];
            let mut acc = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    let (a, b) = (x.row(m[i]), x.row(m[j]));
                    acc += a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
                }
            }
            let got = cohesiveness(&hg, &x, 0, false).unwrap();
            assert!((got - acc / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn drop_probability_values() {
        assert!((drop_probability(0.5, 0.1) - 0.5).abs() < 1e-12);
        let expected = 1.0 - 1.0 / (1.0 + (-1.0f64).exp());
        assert!((drop_probability(0.6, 0.1) - expected).abs() < 1e-12);
        assert!((drop_probability(0.6, 0.1) - 0.26894).abs() < 1e-5);
        assert!(drop_probability(0.2, 0.1) > drop_probability(0.3, 0.1));
        assert!(drop_probability(50.0, 0.1) < 1e-12);
        assert!(drop_probability(-50.0, 0.1) > 1.0 - 1e-12);
        let hg = Hypergraph::new(3, &[vec![0, 1, 2], vec![1]], None).unwrap();
        let p = drop_probabilities(&hg, &[0.5, 0.6], &DropConfig::default()).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p[..3].iter().all(|&x| (x - 0.5).abs() < 1e-12));
        assert!(matches!(
            drop_probabilities(&hg, &[0.5, 0.6], &DropConfig { tau_drop: 0.0 }),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn extreme_masks() {
        let (hg, _) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let keep_all = sample_view_structure(&hg, &vec![0.0; 5], &mut rng);
        assert_eq!(&keep_all.incidence, hg.incidence());
        let drop_all = sample_view_structure(&hg, &vec![1.0; 5], &mut rng);
        assert_eq!(drop_all.incidence.nnz(), 0);
        assert_eq!(drop_all.incidence.num_edges(), 2);
    }

    #[test]
    fn masked_incidences_are_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let edges: Vec<Vec<usize>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random_range(0..20)).collect())
            .collect();
        let hg = Hypergraph::new(20, &edges, None).unwrap();
        let probs = vec![0.4; hg.incidence().nnz()];
        let view = sample_view_structure(&hg, &probs, &mut rng);
        for (v, e) in view.incidence.iter() {
            assert!(hg.incidence().contains(v, e));
        }
        let kept = view.mask.iter().filter(|&&k| k).count();
        assert_eq!(kept, view.incidence.nnz());
    }

    #[test]
    fn disabled_augmentation_reproduces_input() {
        let (hg, corpus) = toy();
        let enc = TextEncoder::init(
            EncoderConfig {
                feature_dim: 128,
                output_dim: 8,
                ..EncoderConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let prompt = PromptConfig {
            include_domain: false,
            include_topology: false,
            include_context: false,
            ..PromptConfig::default()
        };
        let generator =
            ViewGenerator::new(&hg, &corpus, &enc, prompt, &DropConfig::default(), DropMode::Disabled).unwrap();
        let (v1, v2) = generator.generate(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = enc.embed_texts(corpus.texts()).unwrap();
        assert_eq!(v1.features, x);
        assert_eq!(v2.features, x);
        assert_eq!(&v1.incidence, hg.incidence());
        assert_eq!(&v2.incidence, hg.incidence());
    }

    #[test]
    fn make_views_is_deterministic() {
        let (hg, corpus) = toy();
        let enc = TextEncoder::init(
            EncoderConfig {
                feature_dim: 128,
                output_dim: 8,
                ..EncoderConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let p = PromptConfig::default();
        let d = DropConfig::default();
        let a = make_views(&hg, &corpus, &enc, &p, &d, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = make_views(&hg, &corpus, &enc, &p, &d, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }
}
