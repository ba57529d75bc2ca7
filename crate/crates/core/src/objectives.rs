//! Node-, hyperedge- and subgraph-level InfoNCE objectives.
//!
//! All three levels share one kernel: cosine similarities between an anchor
//! row and every candidate row, scaled by a temperature, with the matching
//! row as the positive and all other rows as in-batch negatives.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedView;
use crate::error::{Error, Result};
use crate::hgnn::{hgnn_backward, hgnn_forward, subgraph_backward, subgraph_forward, HgnnParams};
use crate::hypergraph::Hypergraph;
use crate::linalg::{log_sum_exp, normalize_rows};
use crate::sampling::{s_walk_with, NodeSetMode, SubgraphSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfoNceConfig {
    pub tau_n: f64,
    pub tau_e: f64,
    pub tau_s: f64,
}

impl Default for InfoNceConfig {
    fn default() -> Self {
        Self {
            tau_n: 0.5,
            tau_e: 0.5,
            tau_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_e: 1.0,
            lambda_s: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("lambda_e", self.lambda_e), ("lambda_s", self.lambda_s)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(())
    }
}

/// Mean over rows `i` of `-log softmax_k(cos(a_i, c_k) / tau)[i]`.
pub fn info_nce(anchors: &Array2<f64>, candidates: &Array2<f64>, tau: f64) -> Result<f64> {
    Ok(info_nce_impl(anchors, candidates, tau, false)?.0)
}

/// InfoNCE value with gradients for both inputs.
pub fn info_nce_with_grad(
    anchors: &Array2<f64>,
    candidates: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (loss, grads) = info_nce_impl(anchors, candidates, tau, true)?;
    let (ga, gc) = grads.expect("requested");
    Ok((loss, ga, gc))
}

type Grads = Option<(Array2<f64>, Array2<f64>)>;

fn info_nce_impl(a: &Array2<f64>, c: &Array2<f64>, tau: f64, want_grad: bool) -> Result<(f64, Grads)> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let n = a.nrows();
    if n == 0 || c.nrows() != n || a.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "info_nce needs equal non-empty shapes, got {:?} and {:?}",
            a.dim(),
            c.dim()
        )));
    }
    let (a_hat, a_norm) = normalize_rows(a).map_err(|row| Error::ZeroRow { row })?;
    let (c_hat, c_norm) = normalize_rows(c).map_err(|row| Error::ZeroRow { row })?;
    let logits = a_hat.dot(&c_hat.t()) / tau;
    let mut loss = 0.0;
    let mut d_logits = want_grad.then(|| Array2::<f64>::zeros((n, n)));
    for i in 0..n {
        let row = logits.row(i);
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[i];
        if let Some(d) = d_logits.as_mut() {
            for k in 0..n {
                d[[i, k]] = (row[k] - lse).exp() / n as f64;
            }
            d[[i, i]] -= 1.0 / n as f64;
        }
    }
    loss /= n as f64;
    let grads = d_logits.map(|d| {
        let g_a_hat = d.dot(&c_hat) / tau;
        let g_c_hat = d.t().dot(&a_hat) / tau;
        (
            unnormalize_grad(&a_hat, &a_norm, g_a_hat),
            unnormalize_grad(&c_hat, &c_norm, g_c_hat),
        )
    });
    Ok((loss, grads))
}

/// Chain rule through `x -> x / |x|`.
fn unnormalize_grad(x_hat: &Array2<f64>, norms: &[f64], mut g: Array2<f64>) -> Array2<f64> {
    for ((mut gr, xr), &nrm) in g.outer_iter_mut().zip(x_hat.outer_iter()).zip(norms) {
        let proj = gr.dot(&xr);
        gr.scaled_add(-proj, &xr);
        gr /= nrm;
    }
    g
}

/// `(info_nce(z1, z2) + info_nce(z2, z1)) / 2`.
pub fn symmetric_info_nce(z1: &Array2<f64>, z2: &Array2<f64>, tau: f64) -> Result<f64> {
    Ok((info_nce(z1, z2, tau)? + info_nce(z2, z1, tau)?) / 2.0)
}

fn symmetric_with_grad(z1: &Array2<f64>, z2: &Array2<f64>, tau: f64) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (l12, g1a, g2c) = info_nce_with_grad(z1, z2, tau)?;
    let (l21, g2a, g1c) = info_nce_with_grad(z2, z1, tau)?;
    Ok(((l12 + l21) / 2.0, (g1a + g1c) / 2.0, (g2a + g2c) / 2.0))
}

/// Symmetrized node-level loss.
pub fn node_loss(z1_v: &Array2<f64>, z2_v: &Array2<f64>, tau_n: f64) -> Result<f64> {
    symmetric_info_nce(z1_v, z2_v, tau_n)
}

/// Symmetrized hyperedge-level loss.
pub fn hyperedge_loss(z1_e: &Array2<f64>, z2_e: &Array2<f64>, tau_e: f64) -> Result<f64> {
    symmetric_info_nce(z1_e, z2_e, tau_e)
}

/// `L_n + lambda_e L_e + lambda_s L_s`.
pub fn total_loss(l_n: f64, l_e: f64, l_s: f64, w: &LossWeights) -> f64 {
    l_n + w.lambda_e * l_e + w.lambda_s * l_s
}

/// One walk per anchor on the original hypergraph. Anchors that belong to
/// no hyperedge are skipped.
pub fn sample_subgraphs<R: Rng>(
    hg: &Hypergraph,
    anchors: &[usize],
    s: usize,
    l: usize,
    mode: NodeSetMode,
    rng: &mut R,
) -> Result<Vec<SubgraphSample>> {
    let adjacency = hg.s_adjacency_lists(s)?;
    anchors
        .iter()
        .filter(|&&v| !hg.edges_of(v).is_empty())
        .map(|&v| s_walk_with(hg, &adjacency, v, l, mode, rng))
        .collect()
}

/// Pooled subgraph embeddings of both views, one row per sample.
pub fn subgraph_embeddings(
    view: &AugmentedView,
    samples: &[SubgraphSample],
    params: &HgnnParams,
    weights: &[f64],
) -> Result<Array2<f64>> {
    let rows: Vec<Array1<f64>> = samples
        .par_iter()
        .map(|s| subgraph_forward(view, s, params, weights).map(|e| e.embedding))
        .collect::<Result<_>>()?;
    stack(&rows, params.output_dim())
}

fn stack(rows: &[Array1<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in out.outer_iter_mut().zip(rows) {
        dst.assign(src);
    }
    Ok(out)
}

/// Subgraph-level loss for pre-drawn samples.
pub fn subgraph_loss_for_samples(
    view1: &AugmentedView,
    view2: &AugmentedView,
    samples: &[SubgraphSample],
    params: &HgnnParams,
    weights: &[f64],
    tau_s: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("subgraph loss needs at least one anchor".into()));
    }
    let s1 = subgraph_embeddings(view1, samples, params, weights)?;
    let s2 = subgraph_embeddings(view2, samples, params, weights)?;
    symmetric_info_nce(&s1, &s2, tau_s)
}

/// Draws one s-walk per anchor on `hg`, encodes each through both views and
/// returns the symmetrized subgraph loss.
#[allow(clippy::too_many_arguments)]
pub fn subgraph_loss<R: Rng>(
    view1: &AugmentedView,
    view2: &AugmentedView,
    hg: &Hypergraph,
    anchors: &[usize],
    params: &HgnnParams,
    s: usize,
    l: usize,
    tau_s: f64,
    rng: &mut R,
) -> Result<f64> {
    let samples = sample_subgraphs(hg, anchors, s, l, NodeSetMode::Union, rng)?;
    subgraph_loss_for_samples(view1, view2, &samples, params, hg.weights(), tau_s)
}

/// Which levels contribute and how they are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub temperatures: InfoNceConfig,
    pub weights: LossWeights,
    pub use_subgraph: bool,
}

/// Per-level values of one evaluation of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node: f64,
    pub edge: f64,
    pub subgraph: f64,
    pub total: f64,
}

/// Full hierarchical objective on a view pair, optionally with the gradient
/// for every HGNN parameter.
pub fn hierarchical_loss(
    view1: &AugmentedView,
    view2: &AugmentedView,
    hyperedge_weights: &[f64],
    samples: &[SubgraphSample],
    params: &HgnnParams,
    cfg: &ObjectiveConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<HgnnParams>)> {
    let t = &cfg.temperatures;
    let (out1, out2) = rayon::join(
        || hgnn_forward(view1, params, hyperedge_weights),
        || hgnn_forward(view2, params, hyperedge_weights),
    );
    let (out1, out2) = (out1?, out2?);
    let (l_n, g1v, g2v) = symmetric_with_grad(&out1.z_v, &out2.z_v, t.tau_n)?;
    let (l_e, g1e, g2e) = symmetric_with_grad(&out1.z_e, &out2.z_e, t.tau_e)?;
    let lambda_e = cfg.weights.lambda_e;
    let use_s = cfg.use_subgraph && !samples.is_empty();

    let (l_s, sub_grad) = if use_s {
        let enc1: Vec<_> = samples
            .par_iter()
            .map(|s| subgraph_forward(view1, s, params, hyperedge_weights))
            .collect::<Result<_>>()?;
        let enc2: Vec<_> = samples
            .par_iter()
            .map(|s| subgraph_forward(view2, s, params, hyperedge_weights))
            .collect::<Result<_>>()?;
        let d = params.output_dim();
        let s1 = stack(&enc1.iter().map(|e| e.embedding.clone()).collect::<Vec<_>>(), d)?;
        let s2 = stack(&enc2.iter().map(|e| e.embedding.clone()).collect::<Vec<_>>(), d)?;
        let (l_s, gs1, gs2) = symmetric_with_grad(&s1, &s2, t.tau_s)?;
        let grad = if want_grad {
            let lambda_s = cfg.weights.lambda_s;
            let jobs: Vec<(&_, Array1<f64>)> = enc1
                .iter()
                .zip(gs1.outer_iter())
                .chain(enc2.iter().zip(gs2.outer_iter()))
                .map(|(enc, g)| (enc, g.to_owned()))
                .collect();
            let parts: Vec<HgnnParams> = jobs
                .par_iter()
                .map(|(enc, g)| subgraph_backward(enc, params, g))
                .collect::<Result<_>>()?;
            let mut acc = params.zeros_like();
            for p in &parts {
                acc.add_scaled(lambda_s, p);
            }
            Some(acc)
        } else {
            None
        };
        (l_s, grad)
    } else {
        (0.0, None)
    };

    let total = total_loss(l_n, l_e, l_s, &cfg.weights);
    let breakdown = LossBreakdown {
        node: l_n,
        edge: l_e,
        subgraph: l_s,
        total,
    };
    if !want_grad {
        return Ok((breakdown, None));
    }
    let ge1 = g1e * lambda_e;
    let ge2 = g2e * lambda_e;
    let (b1, b2) = rayon::join(
        || hgnn_backward(&out1, params, &g1v, Some(&ge1)),
        || hgnn_backward(&out2, params, &g2v, Some(&ge2)),
    );
    let mut grad = b1?.params;
    grad.add_scaled(1.0, &b2?.params);
    if let Some(sg) = sub_grad {
        grad.add_scaled(1.0, &sg);
    }
    Ok((breakdown, Some(grad)))
}
