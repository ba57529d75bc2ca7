//! Downstream protocols over frozen embeddings: linear-probe node
//! classification and hyperedge prediction against clique negatives.

use std::collections::HashSet;

use ndarray::{Array1, Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeLabels};
use crate::linalg::{log_sum_exp, mean_std};
use crate::optim::Adam;
use crate::rng::{stream_rng, Stream};

/// Split fractions and repetition counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub num_splits: usize,
    pub inits_per_split: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 10/10/80, 20 splits, 5 initializations each.
    pub fn node_classification(seed: u64) -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
            num_splits: 20,
            inits_per_split: 5,
            seed,
        }
    }

    /// 60/20/20, 20 splits, 5 initializations each.
    pub fn hyperedge_prediction(seed: u64) -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            ..Self::node_classification(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidConfig(format!("split fractions must be positive, got {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions must sum to 1, got {fr:?}")));
        }
        if self.num_splits == 0 || self.inits_per_split == 0 {
            return Err(Error::InvalidConfig("need at least one split and one initialization".into()));
        }
        Ok(())
    }

    /// Disjoint train/val/test index lists covering `0..n` for split `k`.
    pub fn split(&self, n: usize, k: usize, salt: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let n_train = (self.train * n as f64).round() as usize;
        let n_val = (self.val * n as f64).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::InsufficientData(format!("{n} items cannot be split as {self:?}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(self.seed, Stream::Splits, (salt << 32) | k as u64));
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok((idx, val, test))
    }
}

/// Accuracy summary in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub mean: f64,
    pub std: f64,
    /// One accuracy per (split, initialization), split-major.
    pub per_split: Vec<f64>,
    pub config_hash: String,
}

impl EvalReport {
    pub fn from_scores(task: &str, per_split: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_split);
        Self {
            task: task.to_string(),
            mean,
            std,
            per_split,
            config_hash: String::new(),
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = hash.into();
        self
    }

    /// True when `mean` and `std` agree with `per_split`.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.per_split);
        m == self.mean && s == self.std
    }
}

pub const L2_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

const LOGREG_MAX_ITERS: usize = 500;
const LOGREG_GRAD_TOL: f64 = 1e-6;

/// Standardizes columns with statistics from `fit_rows`; constant columns
/// are only centered.
fn standardize(x: &Array2<f64>, fit_rows: &[usize]) -> Array2<f64> {
    let sub = x.select(Axis(0), fit_rows);
    let mean = sub.mean_axis(Axis(0)).expect("non-empty");
    let std = sub.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (x - &mean) / &std
}

fn with_bias(x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::ones((x.nrows(), x.ncols() + 1));
    out.slice_mut(ndarray::s![.., ..x.ncols()]).assign(x);
    out
}

/// Mean cross-entropy plus `l2/2 |W|^2` (bias row excluded) and its gradient.
fn logreg_grad(x: &Array2<f64>, y: &[usize], w: &Array2<f64>, l2: f64) -> (f64, Array2<f64>) {
    let n = x.nrows() as f64;
    let logits = x.dot(w);
    let mut p = logits.clone();
    let mut loss = 0.0;
    for (mut row, &yi) in p.outer_iter_mut().zip(y) {
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[yi];
        row.mapv_inplace(|z| (z - lse).exp());
        row[yi] -= 1.0;
    }
    let mut grad = x.t().dot(&p) / n;
    let d = w.nrows() - 1;
    let mut reg = 0.0;
    for j in 0..d {
        for c in 0..w.ncols() {
            grad[[j, c]] += l2 * w[[j, c]];
            reg += w[[j, c]] * w[[j, c]];
        }
    }
    (loss / n + 0.5 * l2 * reg, grad)
}

/// Multinomial logistic regression by accelerated full-batch gradient
/// descent with step `1/L`.
pub fn fit_logreg(x: &Array2<f64>, y: &[usize], num_classes: usize, l2: f64, init: Array2<f64>) -> Array2<f64> {
    let mean_sq = x.outer_iter().map(|r| r.dot(&r)).sum::<f64>() / x.nrows() as f64;
    let step = 1.0 / (0.5 * mean_sq + l2);
    debug_assert_eq!(init.dim(), (x.ncols(), num_classes));
    let mut w = init;
    let mut prev = w.clone();
    for k in 0..LOGREG_MAX_ITERS {
        let momentum = k as f64 / (k as f64 + 3.0);
        let look = &w + &((&w - &prev) * momentum);
        let (_, g) = logreg_grad(x, y, &look, l2);
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= LOGREG_GRAD_TOL {
            w = look;
            break;
        }
        prev = w;
        w = look - g * step;
    }
    w
}

fn predict(x: &Array2<f64>, w: &Array2<f64>) -> Vec<usize> {
    x.dot(w)
        .outer_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / truth.len() as f64
}

/// Linear-probe node classification. `l2 = None` picks the regularization
/// from [`L2_GRID`] on validation accuracy.
pub fn linear_probe(z: &Array2<f64>, labels: &NodeLabels, spec: &SplitSpec, l2: Option<f64>) -> Result<EvalReport> {
    spec.validate()?;
    if labels.len() != z.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} embeddings",
            labels.len(),
            z.nrows()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("embeddings".into()));
    }
    let labeled: Vec<usize> = (0..labels.len()).filter(|&v| labels.get(v).is_some()).collect();
    let y_all: Vec<usize> = labeled.iter().map(|&v| labels.get(v).unwrap()).collect();
    let present: HashSet<usize> = y_all.iter().copied().collect();
    let c = labels.num_classes();
    if present.len() < 2 {
        return Err(Error::InsufficientData("linear probe needs at least two classes".into()));
    }
    let grid: Vec<f64> = match l2 {
        Some(v) => vec![v],
        None => L2_GRID.to_vec(),
    };
    let x_lab = z.select(Axis(0), &labeled);
    let per_split: Vec<Vec<f64>> = (0..spec.num_splits)
        .into_par_iter()
        .map(|k| {
            let (tr, va, te) = spec.split(labeled.len(), k, 0)?;
            let ytr: Vec<usize> = tr.iter().map(|&i| y_all[i]).collect();
            let seen: HashSet<usize> = ytr.iter().copied().collect();
            if let Some(&missing) = present.iter().filter(|cl| !seen.contains(cl)).min() {
                return Err(Error::DegenerateSplit { split: k, class: missing });
            }
            let xs = with_bias(&standardize(&x_lab, &tr));
            let (xtr, xva, xte) = (xs.select(Axis(0), &tr), xs.select(Axis(0), &va), xs.select(Axis(0), &te));
            let yva: Vec<usize> = va.iter().map(|&i| y_all[i]).collect();
            let yte: Vec<usize> = te.iter().map(|&i| y_all[i]).collect();
            let mut scores = Vec::with_capacity(spec.inits_per_split);
            for init in 0..spec.inits_per_split {
                let mut rng = stream_rng(
                    spec.seed,
                    Stream::ClassifierInit,
                    (k * spec.inits_per_split + init) as u64,
                );
                let w0 = Array2::from_shape_simple_fn((xtr.ncols(), c), || rng.random_range(-0.01..0.01));
                let mut best: Option<(f64, Array2<f64>)> = None;
                for &lam in &grid {
                    let w = fit_logreg(&xtr, &ytr, c, lam, w0.clone());
                    let acc = accuracy(&predict(&xva, &w), &yva);
                    if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                        best = Some((acc, w));
                    }
                }
                let (_, w) = best.expect("non-empty grid");
                scores.push(accuracy(&predict(&xte, &w), &yte));
            }
            Ok(scores)
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_scores("node_classification", per_split.concat()))
}

/// Clique negative sampler with precomputed 1-hop neighborhoods and the set
/// of existing hyperedges.
pub struct CnsSampler<'a> {
    hg: &'a Hypergraph,
    neighbors: Vec<Vec<usize>>,
    existing: HashSet<Vec<usize>>,
}

impl<'a> CnsSampler<'a> {
    pub fn new(hg: &'a Hypergraph) -> Self {
        Self {
            hg,
            neighbors: hg.neighbor_lists(),
            existing: hg.hyperedges().into_iter().collect(),
        }
    }

    /// Valid replacements `v` for removing `u` from hyperedge `e`.
    pub fn replacements(&self, e: usize, u: usize) -> Vec<usize> {
        let members = self.hg.members(e);
        let rest: Vec<usize> = members.iter().copied().filter(|&w| w != u).collect();
        let Some(&first) = rest.first() else {
            return Vec::new();
        };
        self.neighbors[first]
            .iter()
            .copied()
            .filter(|v| !members.contains(v))
            .filter(|&v| rest.iter().all(|&w| self.neighbors[w].binary_search(&v).is_ok()))
            .filter(|&v| !self.existing.contains(&with_member(&rest, v)))
            .collect()
    }

    /// `(e \ {u}) ∪ {v}` with `u` uniform in `e` and `v` uniform among valid
    /// replacements; other `u` are tried when one has none.
    pub fn sample<R: Rng>(&self, e: usize, rng: &mut R) -> Result<Vec<usize>> {
        if e >= self.hg.num_edges() {
            return Err(Error::HyperedgeIdOutOfRange {
                id: e,
                num_edges: self.hg.num_edges(),
            });
        }
        let mut order = self.hg.members(e).to_vec();
        if order.len() < 2 {
            return Err(Error::NoEligibleNegative { edge: e });
        }
        order.shuffle(rng);
        for u in order {
            let options = self.replacements(e, u);
            if let Some(&v) = options.choose(rng) {
                let rest: Vec<usize> = self.hg.members(e).iter().copied().filter(|&w| w != u).collect();
                return Ok(with_member(&rest, v));
            }
        }
        Err(Error::NoEligibleNegative { edge: e })
    }

    /// Size, outsider, connectivity and novelty checks for a candidate
    /// negative of `e`.
    pub fn is_valid_negative(&self, e: usize, candidate: &[usize]) -> bool {
        let members = self.hg.members(e);
        if candidate.len() != members.len() {
            return false;
        }
        let outsiders: Vec<usize> = candidate.iter().copied().filter(|v| !members.contains(v)).collect();
        if outsiders.len() != 1 {
            return false;
        }
        let v = outsiders[0];
        let connected = candidate
            .iter()
            .filter(|&&w| w != v)
            .all(|&w| self.hg.edges_of(w).iter().any(|&f| self.hg.members(f).contains(&v)));
        let mut sorted = candidate.to_vec();
        sorted.sort_unstable();
        connected && !self.existing.contains(&sorted)
    }
}

fn with_member(rest: &[usize], v: usize) -> Vec<usize> {
    let mut out = rest.to_vec();
    out.push(v);
    out.sort_unstable();
    out
}

/// One clique negative for hyperedge `e`.
pub fn cns_negative<R: Rng>(hg: &Hypergraph, e: usize, rng: &mut R) -> Result<Vec<usize>> {
    CnsSampler::new(hg).sample(e, rng)
}

/// Two-layer perceptron settings for hyperedge prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Validation accuracy is checked every this many epochs.
    pub eval_every: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            lr: 1e-2,
            eval_every: 10,
        }
    }
}

/// Hidden ReLU layer followed by one logit.
#[derive(Debug, Clone)]
struct Mlp {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array1<f64>,
    b2: f64,
}

impl Mlp {
    fn init<R: Rng>(d: usize, h: usize, rng: &mut R) -> Self {
        let a1 = 1.0 / (d as f64).sqrt();
        let a2 = 1.0 / (h as f64).sqrt();
        Self {
            w1: Array2::from_shape_simple_fn((d, h), || rng.random_range(-a1..a1)),
            b1: Array1::zeros(h),
            w2: Array1::from_shape_simple_fn(h, || rng.random_range(-a2..a2)),
            b2: 0.0,
        }
    }

    fn hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        (x.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0))
    }

    fn logits(&self, x: &Array2<f64>) -> Array1<f64> {
        self.hidden(x).dot(&self.w2) + self.b2
    }

    fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().chain(&self.b1).chain(&self.w2).copied().collect();
        v.push(self.b2);
        v
    }

    fn assign(&mut self, v: &[f64]) {
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        self.w1.iter_mut().zip(&v[..n1]).for_each(|(p, &x)| *p = x);
        self.b1.iter_mut().zip(&v[n1..n1 + n2]).for_each(|(p, &x)| *p = x);
        self.w2.iter_mut().zip(&v[n1 + n2..n1 + n2 + n3]).for_each(|(p, &x)| *p = x);
        self.b2 = v[n1 + n2 + n3];
    }

    /// Gradient of mean binary cross-entropy, flattened like `flat`.
    fn grad(&self, x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
        let n = x.nrows() as f64;
        let pre = x.dot(&self.w1) + &self.b1;
        let h = pre.mapv(|v| v.max(0.0));
        let logits = h.dot(&self.w2) + self.b2;
        let dl: Array1<f64> = logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| (sigmoid(z) - t) / n)
            .collect();
        let gw2 = h.t().dot(&dl);
        let gb2 = dl.sum();
        let mut dh = dl.insert_axis(Axis(1)).dot(&self.w2.view().insert_axis(Axis(0)));
        dh.zip_mut_with(&pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        let gw1 = x.t().dot(&dh);
        let gb1 = dh.sum_axis(Axis(0));
        let mut v: Vec<f64> = gw1.iter().chain(&gb1).chain(&gw2).copied().collect();
        v.push(gb2);
        v
    }

    fn accuracy(&self, x: &Array2<f64>, y: &[f64]) -> f64 {
        let hits = self
            .logits(x)
            .iter()
            .zip(y)
            .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
            .count();
        100.0 * hits as f64 / y.len() as f64
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

/// Trains on `(xtr, ytr)` with Adam and returns test accuracy at the epoch of
/// best validation accuracy.
fn train_mlp<R: Rng>(
    cfg: &MlpConfig,
    (xtr, ytr): (&Array2<f64>, &[f64]),
    (xva, yva): (&Array2<f64>, &[f64]),
    (xte, yte): (&Array2<f64>, &[f64]),
    rng: &mut R,
) -> f64 {
    let mut mlp = Mlp::init(xtr.ncols(), cfg.hidden, rng);
    let mut params = mlp.flat();
    let mut adam = Adam::new(cfg.lr, 0.0, params.len());
    let mut best = (mlp.accuracy(xva, yva), mlp.accuracy(xte, yte));
    let every = cfg.eval_every.max(1);
    for epoch in 1..=cfg.epochs {
        let g = mlp.grad(xtr, ytr);
        adam.step(&mut params, &g);
        mlp.assign(&params);
        if epoch % every == 0 || epoch == cfg.epochs {
            let va = mlp.accuracy(xva, yva);
            if va > best.0 {
                best = (va, mlp.accuracy(xte, yte));
            }
        }
    }
    best.1
}

fn mean_rows(z: &Array2<f64>, members: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(z.ncols());
    for &v in members {
        acc += &z.row(v);
    }
    acc / members.len() as f64
}

/// Positive hyperedges with one clique negative each. Hyperedges of size one
/// and those without any valid negative are skipped.
pub fn build_edge_candidates<R: Rng>(hg: &Hypergraph, rng: &mut R) -> Result<(Vec<Vec<usize>>, Vec<f64>)> {
    let sampler = CnsSampler::new(hg);
    let mut sets = Vec::new();
    let mut labels = Vec::new();
    for e in 0..hg.num_edges() {
        if hg.edge_degree(e) < 2 {
            continue;
        }
        match sampler.sample(e, rng) {
            Ok(neg) => {
                sets.push(hg.members(e).to_vec());
                labels.push(1.0);
                sets.push(neg);
                labels.push(0.0);
            }
            Err(Error::NoEligibleNegative { .. }) => continue,
            Err(err) => return Err(err),
        }
    }
    Ok((sets, labels))
}

/// Hyperedge prediction: real hyperedges against clique negatives, each
/// candidate represented by the mean of its members' embeddings.
pub fn hyperedge_prediction<R: Rng>(
    z: &Array2<f64>,
    hg: &Hypergraph,
    spec: &SplitSpec,
    mlp: &MlpConfig,
    rng: &mut R,
) -> Result<EvalReport> {
    spec.validate()?;
    if z.nrows() != hg.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings for {} nodes",
            z.nrows(),
            hg.num_nodes()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("embeddings".into()));
    }
    let (sets, labels) = build_edge_candidates(hg, rng)?;
    if sets.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "only {} positive hyperedges admit a clique negative",
            sets.len() / 2
        )));
    }
    let mut feats = Array2::zeros((sets.len(), z.ncols()));
    for (mut row, s) in feats.outer_iter_mut().zip(&sets) {
        row.assign(&mean_rows(z, s));
    }
    let per_split: Vec<Vec<f64>> = (0..spec.num_splits)
        .into_par_iter()
        .map(|k| {
            let (tr, va, te) = spec.split(sets.len(), k, 1)?;
            let xs = standardize(&feats, &tr);
            let pick = |idx: &[usize]| -> (Array2<f64>, Vec<f64>) {
                (xs.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect())
            };
            let (xtr, ytr) = pick(&tr);
            let (xva, yva) = pick(&va);
            let (xte, yte) = pick(&te);
            Ok((0..spec.inits_per_split)
                .map(|init| {
                    let mut r = stream_rng(
                        spec.seed,
                        Stream::ClassifierInit,
                        (1 << 40) | (k * spec.inits_per_split + init) as u64,
                    );
                    train_mlp(mlp, (&xtr, &ytr), (&xva, &yva), (&xte, &yte), &mut r)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_scores("hyperedge_prediction", per_split.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec(seed: u64) -> SplitSpec {
        SplitSpec {
            num_splits: 4,
            inits_per_split: 2,
            ..SplitSpec::node_classification(seed)
        }
    }

    #[test]
    fn protocol_constants() {
        let s = SplitSpec::node_classification(0);
        assert_eq!((s.train, s.val, s.test, s.num_splits, s.inits_per_split), (0.1, 0.1, 0.8, 20, 5));
        let h = SplitSpec::hyperedge_prediction(0);
        assert_eq!((h.train, h.val, h.test), (0.6, 0.2, 0.2));
        assert!(SplitSpec { train: 0.5, ..s }.validate().is_err());
    }

    #[test]
    fn splits_disjoint_cover_and_reproducible() {
        let spec = SplitSpec::node_classification(3);
        for k in 0..5 {
            let (a, b, c) = spec.split(97, k, 0).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..97).collect::<Vec<_>>());
            assert_eq!((a.len(), b.len()), (10, 10));
            assert_eq!(spec.split(97, k, 0).unwrap(), (a, b, c));
        }
        assert_ne!(spec.split(97, 0, 0).unwrap(), spec.split(97, 1, 0).unwrap());
    }

    #[test]
    fn separable_embeddings_score_100() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100;
        let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % 2)).collect();
        let z = Array2::from_shape_fn((n, 3), |(i, _)| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + rng.random::<f64>())
        });
        let report = linear_probe(&z, &NodeLabels::new(labels, 2).unwrap(), &small_spec(0), None).unwrap();
        assert!(report.per_split.iter().all(|&a| a == 100.0), "{:?}", report.per_split);
        assert!(report.is_consistent());
        assert_eq!(report.per_split.len(), 8);
    }

    #[test]
    fn shuffled_labels_score_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400;
        let c = 4;
        let z = Array2::from_shape_simple_fn((n, 8), || rng.random_range(-1.0..1.0));
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..c))).collect();
        let spec = SplitSpec {
            inits_per_split: 1,
            ..SplitSpec::node_classification(5)
        };
        let report = linear_probe(&z, &NodeLabels::new(labels, c).unwrap(), &spec, Some(1e-2)).unwrap();
        let se = report.std / (report.per_split.len() as f64).sqrt();
        let chance = 100.0 / c as f64;
        // Spread across splits plus the binomial error of one test set.
        let binom = (chance * (100.0 - chance) / (0.8 * n as f64)).sqrt();
        assert!((report.mean - chance).abs() <= 3.0 * (se + binom / (20f64).sqrt()), "{report:?}");
    }

    #[test]
    fn missing_class_in_train_is_degenerate() {
        let n = 50;
        let mut labels: Vec<Option<usize>> = vec![Some(0); n];
        labels[7] = Some(1);
        let z = Array2::from_shape_fn((n, 2), |(i, j)| (i + j) as f64);
        let err = linear_probe(&z, &NodeLabels::new(labels, 2).unwrap(), &small_spec(0), None).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit { class: 1, .. }));
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = with_bias(&Array2::from_shape_simple_fn((7, 3), || rng.random_range(-1.0..1.0)));
        let y = vec![0, 1, 2, 1, 0, 2, 2];
        let w = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let (_, g) = logreg_grad(&x, &y, &w, 0.3);
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut wp = w.clone();
                wp[[i, j]] += h;
                let mut wm = w.clone();
                wm[[i, j]] -= h;
                let fd = (logreg_grad(&x, &y, &wp, 0.3).0 - logreg_grad(&x, &y, &wm, 0.3).0) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let y = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let mut mlp = Mlp::init(3, 5, &mut rng);
        mlp.b1.fill(0.1);
        let loss = |m: &Mlp| -> f64 {
            m.logits(&x)
                .iter()
                .zip(&y)
                .map(|(&z, &t)| -(t * sigmoid(z).ln() + (1.0 - t) * (1.0 - sigmoid(z)).ln()))
                .sum::<f64>()
                / 6.0
        };
        let g = mlp.grad(&x, &y);
        let base = mlp.flat();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut m = mlp.clone();
            m.assign(&p);
            let up = loss(&m);
            p[i] -= 2.0 * h;
            m.assign(&p);
            let down = loss(&m);
            assert!(((up - down) / (2.0 * h) - g[i]).abs() < 1e-7, "param {i}");
        }
    }

    #[test]
    fn cns_rejects_existing_hyperedge() {
        let hg = Hypergraph::new(4, &[vec![0, 1, 2], vec![1, 2, 3]], None).unwrap();
        let sampler = CnsSampler::new(&hg);
        assert!(sampler.replacements(0, 0).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sampler.sample(0, &mut rng), Err(Error::NoEligibleNegative { edge: 0 })));
    }

    #[test]
    fn cns_star_has_no_negative() {
        let hg = Hypergraph::new(5, &[vec![0, 1], vec![0, 2], vec![0, 3], vec![0, 4]], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Replacing 0 needs a node adjacent to 1, which only 0 is; replacing 1
        // gives {0, v} which already exists for every v.
        assert!(matches!(cns_negative(&hg, 0, &mut rng), Err(Error::NoEligibleNegative { .. })));
    }

    #[test]
    fn cns_samples_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let edges: Vec<Vec<usize>> = (0..60)
            .map(|_| (0..rng.random_range(2..5)).map(|_| rng.random_range(0..25)).collect())
            .collect();
        let hg = Hypergraph::new(25, &edges, None).unwrap();
        let sampler = CnsSampler::new(&hg);
        let mut checked = 0;
        for i in 0..2000 {
            let e = i % hg.num_edges();
            if hg.edge_degree(e) < 2 {
                continue;
            }
            if let Ok(neg) = sampler.sample(e, &mut rng) {
                assert!(sampler.is_valid_negative(e, &neg), "{neg:?} for {:?}", hg.members(e));
                checked += 1;
            }
        }
        assert!(checked >= 500);
    }

    #[test]
    fn indistinguishable_candidates_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let edges: Vec<Vec<usize>> = (0..80)
            .map(|_| (0..3).map(|_| rng.random_range(0..30)).collect())
            .collect();
        let hg = Hypergraph::new(30, &edges, None).unwrap();
        let z = Array2::ones((30, 4));
        let spec = SplitSpec {
            num_splits: 4,
            inits_per_split: 1,
            ..SplitSpec::hyperedge_prediction(0)
        };
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 20,
            ..MlpConfig::default()
        };
        let report = hyperedge_prediction(&z, &hg, &spec, &cfg, &mut rng).unwrap();
        assert!((report.mean - 50.0).abs() < 15.0, "{report:?}");
    }
}
