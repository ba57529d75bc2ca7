//! Aggregation of run directories into summary tables and plot series.
//!
//! A run directory holds `run.json` and, optionally, `eval_node.json`,
//! `eval_edge.json` and `timing.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::linalg::mean_std;

pub const RUN_FILE: &str = "run.json";
pub const NODE_EVAL_FILE: &str = "eval_node.json";
pub const EDGE_EVAL_FILE: &str = "eval_edge.json";
pub const TIMING_FILE: &str = "timing.json";

/// Deterministic description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub s: usize,
    pub anchor_ratio: f64,
    pub ablation: String,
    pub epochs: usize,
    /// Mean hyperedge count of the walks sampled during training.
    pub mean_subgraph_hyperedges: f64,
    pub final_loss: Option<f64>,
}

/// Wall-clock timings, kept apart from `run.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub node: Option<EvalReport>,
    pub edge: Option<EvalReport>,
    pub timing: Option<Timing>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let record = read_json(&dir.join(RUN_FILE))?
        .ok_or_else(|| Error::MissingRuns(format!("{} has no {RUN_FILE}", dir.display())))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        record,
        node: read_json(&dir.join(NODE_EVAL_FILE))?,
        edge: read_json(&dir.join(EDGE_EVAL_FILE))?,
        timing: read_json(&dir.join(TIMING_FILE))?,
    })
}

/// `root` itself if it is a run directory, plus every run directory below
/// it, sorted by path.
pub fn discover_runs(root: &Path) -> Result<Vec<LoadedRun>> {
    let mut dirs = Vec::new();
    collect(root, &mut dirs)?;
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingRuns(format!("no {RUN_FILE} under {}", root.display())));
    }
    dirs.iter().map(|d| load_run(d)).collect()
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::MissingRuns(format!("{} is not a directory", dir.display())));
    }
    if dir.join(RUN_FILE).is_file() {
        out.push(dir.to_path_buf());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        }
    }
    Ok(())
}

/// Mean and std of pooled per-split accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn pool<'a>(reports: impl Iterator<Item = &'a EvalReport>) -> Option<Pooled> {
    let all: Vec<f64> = reports.flat_map(|r| r.per_split.iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let (mean, std) = mean_std(&all);
    Some(Pooled {
        mean,
        std,
        count: all.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub name: String,
    pub dir: String,
    pub config_hash: String,
    pub seed: u64,
    pub s: usize,
    pub anchor_ratio: f64,
    pub ablation: String,
    pub mean_subgraph_hyperedges: f64,
    pub node: Option<Pooled>,
    pub edge: Option<Pooled>,
    pub train_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub key: String,
    pub runs: usize,
    pub node: Option<Pooled>,
    pub mean_subgraph_hyperedges: f64,
    pub train_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunRow>,
    pub by_s: Vec<SeriesPoint>,
    pub by_anchor_ratio: Vec<SeriesPoint>,
    pub by_ablation: Vec<SeriesPoint>,
}

fn series<K: Ord + ToString>(runs: &[LoadedRun], key: impl Fn(&RunRecord) -> K) -> Vec<SeriesPoint> {
    let mut groups: BTreeMap<K, Vec<&LoadedRun>> = BTreeMap::new();
    for r in runs {
        groups.entry(key(&r.record)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let sizes: Vec<f64> = rs.iter().map(|r| r.record.mean_subgraph_hyperedges).collect();
            let times: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.timing.map(|t| t.stage1_seconds + t.stage2_seconds))
                .collect();
            SeriesPoint {
                key: k.to_string(),
                runs: rs.len(),
                node: pool(rs.iter().filter_map(|r| r.node.as_ref())),
                mean_subgraph_hyperedges: mean_std(&sizes).0,
                train_seconds: (!times.is_empty()).then(|| mean_std(&times).0),
            }
        })
        .collect()
}

/// Orders f64 keys for grouping.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Ratio(f64);

impl Eq for Ratio {}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn summarize(runs: &[LoadedRun]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::MissingRuns("nothing to summarize".into()));
    }
    let rows = runs
        .iter()
        .map(|r| RunRow {
            name: r.record.name.clone(),
            dir: r.dir.display().to_string(),
            config_hash: r.record.config_hash.clone(),
            seed: r.record.seed,
            s: r.record.s,
            anchor_ratio: r.record.anchor_ratio,
            ablation: r.record.ablation.clone(),
            mean_subgraph_hyperedges: r.record.mean_subgraph_hyperedges,
            node: pool(r.node.iter()),
            edge: pool(r.edge.iter()),
            train_seconds: r.timing.map(|t| t.stage1_seconds + t.stage2_seconds),
        })
        .collect();
    Ok(Summary {
        runs: rows,
        by_s: series(runs, |r| r.s),
        by_anchor_ratio: series(runs, |r| Ratio(r.anchor_ratio)),
        by_ablation: series(runs, |r| r.ablation.clone()),
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn runs_csv(summary: &Summary) -> String {
    let mut out = String::from(
        "name,seed,s,anchor_ratio,ablation,node_mean,node_std,edge_mean,edge_std,mean_subgraph_hyperedges,train_seconds\n",
    );
    for r in &summary.runs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.seed,
            r.s,
            r.anchor_ratio,
            r.ablation,
            opt(r.node.map(|p| p.mean)),
            opt(r.node.map(|p| p.std)),
            opt(r.edge.map(|p| p.mean)),
            opt(r.edge.map(|p| p.std)),
            r.mean_subgraph_hyperedges,
            opt(r.train_seconds),
        ));
    }
    out
}

pub fn series_csv(key_name: &str, points: &[SeriesPoint]) -> String {
    let mut out = format!("{key_name},runs,accuracy_mean,accuracy_std,mean_subgraph_hyperedges,train_seconds\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.key,
            p.runs,
            opt(p.node.map(|n| n.mean)),
            opt(p.node.map(|n| n.std)),
            p.mean_subgraph_hyperedges,
            opt(p.train_seconds),
        ));
    }
    out
}

/// Writes `summary.json`, `runs.csv`, `series_s.csv`, `series_r.csv` and
/// `ablation.csv` into `out`.
pub fn write_report(summary: &Summary, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let files = [
        ("summary.json", serde_json::to_string_pretty(summary)?),
        ("runs.csv", runs_csv(summary)),
        ("series_s.csv", series_csv("s", &summary.by_s)),
        ("series_r.csv", series_csv("anchor_ratio", &summary.by_anchor_ratio)),
        ("ablation.csv", series_csv("ablation", &summary.by_ablation)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
