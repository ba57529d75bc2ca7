//! HGNN encoder with mean aggregation and PReLU activations.
//!
//! Each layer computes
//!
//! ```text
//! Z_E = prelu(De^-1 H^T Z_V Theta_E + b_e)
//! Z_V = prelu(Dv^-1 H W Z_E Theta_V + b_v)
//! ```
//!
//! on the (possibly masked) incidence `H`. Degrees are recomputed on the
//! structure that is actually encoded; an empty hyperedge or an isolated
//! node gets a zero message instead of a division by zero.
//!
//! Gradients are derived by hand: the sparse aggregations are linear, so
//! their adjoints are the transposed scatters.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedView;
use crate::error::{Error, Result};
use crate::hypergraph::Incidence;
use crate::sampling::SubgraphSample;
use crate::text::read_f64_block;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HgnnConfig {
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub num_layers: usize,
    pub prelu_init: f64,
}

impl Default for HgnnConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            output_dim: 64,
            num_layers: 1,
            prelu_init: 0.25,
        }
    }
}

/// Parameters of one node -> hyperedge -> node layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub theta_e: Array2<f64>,
    pub b_e: Array1<f64>,
    pub theta_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub slope_e: f64,
    pub slope_v: f64,
}

impl LayerParams {
    fn zeros(d_in: usize, d_h: usize, d_out: usize) -> Self {
        Self {
            theta_e: Array2::zeros((d_in, d_h)),
            b_e: Array1::zeros(d_h),
            theta_v: Array2::zeros((d_h, d_out)),
            b_v: Array1::zeros(d_out),
            slope_e: 0.0,
            slope_v: 0.0,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.theta_e.nrows(), self.theta_e.ncols(), self.theta_v.ncols())
    }

    fn len(&self) -> usize {
        self.theta_e.len() + self.b_e.len() + self.theta_v.len() + self.b_v.len() + 2
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta_e
            .iter()
            .chain(self.b_e.iter())
            .chain(self.theta_v.iter())
            .chain(self.b_v.iter())
            .copied()
            .chain([self.slope_e, self.slope_v])
    }

    fn assign(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for x in self
            .theta_e
            .iter_mut()
            .chain(self.b_e.iter_mut())
            .chain(self.theta_v.iter_mut())
            .chain(self.b_v.iter_mut())
        {
            *x = it.next().unwrap();
        }
        self.slope_e = it.next().unwrap();
        self.slope_v = it.next().unwrap();
    }
}

/// Stacked layer parameters; also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct HgnnParams {
    pub layers: Vec<LayerParams>,
}

impl HgnnParams {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, PReLU
    /// slopes at `prelu_init`.
    pub fn init<R: Rng>(input_dim: usize, cfg: &HgnnConfig, rng: &mut R) -> Result<Self> {
        if cfg.num_layers == 0 || input_dim == 0 || cfg.hidden_dim == 0 || cfg.output_dim == 0 {
            return Err(Error::InvalidConfig("HGNN dimensions and layer count must be positive".into()));
        }
        let mut layers = Vec::with_capacity(cfg.num_layers);
        let mut d_in = input_dim;
        for _ in 0..cfg.num_layers {
            let be = 1.0 / (d_in as f64).sqrt();
            let bv = 1.0 / (cfg.hidden_dim as f64).sqrt();
            let mut uniform = |shape: (usize, usize), bound: f64| {
                Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
            };
            let theta_e = uniform((d_in, cfg.hidden_dim), be);
            let b_e = uniform((1, cfg.hidden_dim), be).remove_axis(Axis(0));
            let theta_v = uniform((cfg.hidden_dim, cfg.output_dim), bv);
            let b_v = uniform((1, cfg.output_dim), bv).remove_axis(Axis(0));
            layers.push(LayerParams {
                theta_e,
                b_e,
                theta_v,
                b_v,
                slope_e: cfg.prelu_init,
                slope_v: cfg.prelu_init,
            });
            d_in = cfg.output_dim;
        }
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let (a, b, c) = l.dims();
                    LayerParams::zeros(a, b, c)
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].theta_e.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().unwrap().theta_e.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().theta_v.ncols()
    }

    pub fn num_values(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    /// Flattened values in checkpoint order: per layer Theta_E, b_e, Theta_V,
    /// b_v, slope_e, slope_v (matrices row-major).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(LayerParams::values).collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_values());
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.len();
            layer.assign(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, scale: f64, other: &HgnnParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.theta_e.scaled_add(scale, &b.theta_e);
            a.b_e.scaled_add(scale, &b.b_e);
            a.theta_v.scaled_add(scale, &b.theta_v);
            a.b_v.scaled_add(scale, &b.b_v);
            a.slope_e += scale * b.slope_e;
            a.slope_v += scale * b.slope_v;
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"HITECHG1")?;
        w.write_all(&(self.layers.len() as u64).to_le_bytes())?;
        for layer in &self.layers {
            let (a, b, c) = layer.dims();
            for d in [a, b, c] {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
        }
        for x in self.to_flat() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"HITECHG1" {
            return Err(Error::Format("bad HGNN checkpoint magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word) as usize)
        };
        let num_layers = next(r)?;
        if num_layers == 0 || num_layers > 1024 {
            return Err(Error::Format(format!("implausible layer count {num_layers}")));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let (a, b, c) = (next(r)?, next(r)?, next(r)?);
            layers.push(LayerParams::zeros(a, b, c));
        }
        let mut params = Self { layers };
        let flat = read_f64_block(r, params.num_values())?;
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("HGNN checkpoint values".into()));
        }
        params.assign_flat(&flat);
        Ok(params)
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    msg_e: Array2<f64>,
    pre_e: Array2<f64>,
    z_e: Array2<f64>,
    msg_v: Array2<f64>,
    pre_v: Array2<f64>,
    inv_edge_deg: Vec<f64>,
    inv_node_deg: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    incidence: Incidence,
    weights: Vec<f64>,
    layers: Vec<LayerCache>,
}

/// Node and hyperedge embeddings with the cache needed for backprop.
#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub z_v: Array2<f64>,
    pub z_e: Array2<f64>,
    cache: Option<ForwardCache>,
}

impl EncodeOutput {
    /// Drops the backprop cache, e.g. after inference.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

/// Gradients for every parameter and for the input features.
#[derive(Debug, Clone)]
pub struct HgnnGrads {
    pub params: HgnnParams,
    pub features: Array2<f64>,
}

fn prelu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

/// Returns the gradient w.r.t. the pre-activation and accumulates the slope
/// gradient.
fn prelu_backward(pre: &Array2<f64>, grad: &Array2<f64>, slope: f64, slope_grad: &mut f64) -> Array2<f64> {
    let mut out = grad.clone();
    for (g, &x) in out.iter_mut().zip(pre.iter()) {
        if x < 0.0 {
            *slope_grad += *g * x;
            *g *= slope;
        }
    }
    out
}

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput(what.into()));
    }
    Ok(())
}

/// Runs the encoder on `features` over `incidence` with hyperedge `weights`.
pub fn encode(
    incidence: &Incidence,
    features: &Array2<f64>,
    weights: &[f64],
    params: &HgnnParams,
) -> Result<EncodeOutput> {
    let n = incidence.num_nodes();
    let m = incidence.num_edges();
    if features.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {n} nodes",
            features.nrows()
        )));
    }
    if features.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} but encoder expects {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    if weights.len() != m {
        return Err(Error::DimensionMismatch(format!("{} weights for {m} hyperedges", weights.len())));
    }
    check_finite(features, "features")?;

    let inv_edge_deg: Vec<f64> = (0..m)
        .map(|e| match incidence.edge_size(e) {
            0 => 0.0,
            k => 1.0 / k as f64,
        })
        .collect();
    let inv_node_deg: Vec<f64> = (0..n)
        .map(|v| {
            let d: f64 = incidence.edges_of(v).iter().map(|&e| weights[e]).sum();
            if d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        })
        .collect();

    let mut caches = Vec::with_capacity(params.layers.len());
    let mut z_v = features.clone();
    let mut z_e = Array2::zeros((m, 0));
    for layer in &params.layers {
        let d_in = layer.theta_e.nrows();
        let mut msg_e = Array2::<f64>::zeros((m, d_in));
        for e in 0..m {
            let mut row = msg_e.row_mut(e);
            for &v in incidence.members(e) {
                row += &z_v.row(v);
            }
            row *= inv_edge_deg[e];
        }
        let pre_e = msg_e.dot(&layer.theta_e) + &layer.b_e;
        let z_e_l = prelu(&pre_e, layer.slope_e);

        let d_h = layer.theta_e.ncols();
        let mut msg_v = Array2::<f64>::zeros((n, d_h));
        for v in 0..n {
            let mut row = msg_v.row_mut(v);
            for &e in incidence.edges_of(v) {
                row.scaled_add(weights[e], &z_e_l.row(e));
            }
            row *= inv_node_deg[v];
        }
        let pre_v = msg_v.dot(&layer.theta_v) + &layer.b_v;
        let z_v_next = prelu(&pre_v, layer.slope_v);
        caches.push(LayerCache {
            input: std::mem::replace(&mut z_v, z_v_next),
            msg_e,
            pre_e,
            z_e: z_e_l.clone(),
            msg_v,
            pre_v,
            inv_edge_deg: inv_edge_deg.clone(),
            inv_node_deg: inv_node_deg.clone(),
        });
        z_e = z_e_l;
    }
    Ok(EncodeOutput {
        z_v,
        z_e,
        cache: Some(ForwardCache {
            incidence: incidence.clone(),
            weights: weights.to_vec(),
            layers: caches,
        }),
    })
}

/// Encodes one augmented view.
pub fn hgnn_forward(view: &AugmentedView, params: &HgnnParams, weights: &[f64]) -> Result<EncodeOutput> {
    encode(&view.incidence, &view.features, weights, params)
}

/// Reverse pass given upstream gradients for `Z_V` and `Z_E` (last layer).
pub fn hgnn_backward(
    out: &EncodeOutput,
    params: &HgnnParams,
    grad_z_v: &Array2<f64>,
    grad_z_e: Option<&Array2<f64>>,
) -> Result<HgnnGrads> {
    let cache = out.cache.as_ref().ok_or(Error::MissingForwardCache)?;
    if grad_z_v.dim() != out.z_v.dim() {
        return Err(Error::DimensionMismatch("grad_z_v shape".into()));
    }
    if let Some(g) = grad_z_e {
        if g.dim() != out.z_e.dim() {
            return Err(Error::DimensionMismatch("grad_z_e shape".into()));
        }
    }
    let inc = &cache.incidence;
    let mut grads = params.zeros_like();
    let mut g_z_v = grad_z_v.clone();
    let last = params.layers.len() - 1;
    for (l, (layer, c)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let g = &mut grads.layers[l];
        let g_pre_v = prelu_backward(&c.pre_v, &g_z_v, layer.slope_v, &mut g.slope_v);
        g.theta_v = c.msg_v.t().dot(&g_pre_v);
        g.b_v = g_pre_v.sum_axis(Axis(0));
        let g_msg_v = g_pre_v.dot(&layer.theta_v.t());

        let mut g_z_e = match grad_z_e {
            Some(ext) if l == last => ext.clone(),
            _ => Array2::zeros(c.z_e.dim()),
        };
        for v in 0..inc.num_nodes() {
            let scale = c.inv_node_deg[v];
            if scale == 0.0 {
                continue;
            }
            for &e in inc.edges_of(v) {
                g_z_e.row_mut(e).scaled_add(cache.weights[e] * scale, &g_msg_v.row(v));
            }
        }
        let g_pre_e = prelu_backward(&c.pre_e, &g_z_e, layer.slope_e, &mut g.slope_e);
        g.theta_e = c.msg_e.t().dot(&g_pre_e);
        g.b_e = g_pre_e.sum_axis(Axis(0));
        let g_msg_e = g_pre_e.dot(&layer.theta_e.t());

        let mut g_input = Array2::<f64>::zeros(c.input.dim());
        for e in 0..inc.num_edges() {
            let scale = c.inv_edge_deg[e];
            if scale == 0.0 {
                continue;
            }
            for &v in inc.members(e) {
                g_input.row_mut(v).scaled_add(scale, &g_msg_e.row(e));
            }
        }
        g_z_v = g_input;
    }
    Ok(HgnnGrads {
        params: grads,
        features: g_z_v,
    })
}

/// A subgraph encoded through a view: its pooled embedding plus what is
/// needed to backpropagate into the parameters.
#[derive(Debug, Clone)]
pub struct SubgraphEncoding {
    pub embedding: Array1<f64>,
    output: EncodeOutput,
}

/// Restricts the view's masked incidence to the sample's nodes and
/// hyperedges, encodes that sub-hypergraph on its own degrees and mean-pools
/// the node embeddings.
pub fn subgraph_forward(
    view: &AugmentedView,
    sub: &SubgraphSample,
    params: &HgnnParams,
    weights: &[f64],
) -> Result<SubgraphEncoding> {
    if sub.node_set.is_empty() || sub.hyperedge_seq.is_empty() {
        return Err(Error::EmptySubgraph);
    }
    let n = view.incidence.num_nodes();
    let m = view.incidence.num_edges();
    if let Some(&v) = sub.node_set.iter().find(|&&v| v >= n) {
        return Err(Error::NodeIdOutOfRange { id: v, num_nodes: n });
    }
    if let Some(&e) = sub.hyperedge_seq.iter().find(|&&e| e >= m) {
        return Err(Error::HyperedgeIdOutOfRange { id: e, num_edges: m });
    }
    let local = view.incidence.restrict(&sub.node_set, &sub.hyperedge_seq);
    let features = view.features.select(Axis(0), &sub.node_set);
    let local_weights: Vec<f64> = sub.hyperedge_seq.iter().map(|&e| weights[e]).collect();
    let output = encode(&local, &features, &local_weights, params)?;
    let embedding = output.z_v.mean_axis(Axis(0)).expect("non-empty node set");
    Ok(SubgraphEncoding { embedding, output })
}

/// Parameter gradients of a pooled subgraph embedding.
pub fn subgraph_backward(
    enc: &SubgraphEncoding,
    params: &HgnnParams,
    grad_embedding: &Array1<f64>,
) -> Result<HgnnParams> {
    let rows = enc.output.z_v.nrows();
    let share = grad_embedding / rows as f64;
    let grad_z_v = share.broadcast((rows, share.len())).unwrap().to_owned();
    Ok(hgnn_backward(&enc.output, params, &grad_z_v, None)?.params)
}
