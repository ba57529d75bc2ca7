//! Stage-2 runs, single or swept over a grid of config overrides.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;

use hitec::dataset::Dataset;
use hitec::eval::{linear_probe, SplitSpec};
use hitec::report::{RunRecord, Timing, NODE_EVAL_FILE, RUN_FILE, TIMING_FILE};
use hitec::text::{write_embeddings, TextEncoder};
use hitec::trainer::{
    embed_nodes, initial_encoder, run_stage1, trace_to_csv, AblationFlags, Checkpoint, RunConfig, Stage2Trainer,
};

use crate::{load_dataset, with_path, write_json, CliError, CliResult, Globals};

#[derive(Debug, Args)]
pub struct HgnnArgs {
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 encoder; stage 1 runs inline when absent.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Continue from `checkpoint.bin` in the run directory.
    #[arg(long)]
    resume: bool,
    /// Write a checkpoint every N epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    anchor_ratio: Option<f64>,
    /// Ablation variant, e.g. "w/o shd".
    #[arg(long)]
    ablation: Option<String>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Grid axis `key=v1,v2,...`; repeatable, runs the cartesian product.
    #[arg(long, value_name = "KEY=V1,V2")]
    sweep: Vec<String>,
    /// Run the linear probe after training.
    #[arg(long)]
    eval_node: bool,
}

pub fn stage1_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

const STAGE2_KEYS: [&str; 12] = [
    "epochs",
    "lr",
    "weight_decay",
    "tau_n",
    "tau_e",
    "tau_s",
    "lambda_e",
    "lambda_s",
    "s",
    "walk_len",
    "anchor_ratio",
    "node_set_mode",
];

/// Bare stage-2 names and `r` are shorthands for `stage2.*`.
fn resolve_key(key: &str) -> String {
    match key {
        "r" => "stage2.anchor_ratio".into(),
        k if STAGE2_KEYS.contains(&k) => format!("stage2.{k}"),
        k => k.into(),
    }
}

/// Sets one dotted config key, parsing `value` as the type already stored
/// there. `ablation` takes a variant name.
pub fn apply_override(cfg: &RunConfig, key: &str, value: &str) -> CliResult<RunConfig> {
    if key == "ablation" {
        let mut out = cfg.clone();
        out.ablation = AblationFlags::from_name(value)?;
        return Ok(out);
    }
    let bad = |m: String| CliError::Usage(m);
    let mut root = toml::Value::try_from(cfg).map_err(|e| bad(e.to_string()))?;
    let path = resolve_key(key);
    let mut slot = &mut root;
    for part in path.split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| bad(format!("unknown config key '{key}'")))?;
    }
    let parsed = match slot {
        toml::Value::Integer(_) => value.parse::<i64>().ok().map(toml::Value::Integer),
        toml::Value::Float(_) => value.parse::<f64>().ok().map(toml::Value::Float),
        toml::Value::Boolean(_) => value.parse::<bool>().ok().map(toml::Value::Boolean),
        toml::Value::String(_) => Some(toml::Value::String(value.to_string())),
        _ => return Err(bad(format!("config key '{key}' cannot be set from the command line"))),
    };
    *slot = parsed.ok_or_else(|| bad(format!("cannot parse '{value}' for '{key}'")))?;
    let out: RunConfig = root.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    out.validate()?;
    Ok(out)
}

fn split_pair(spec: &str) -> CliResult<(&str, &str)> {
    spec.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got '{spec}'")))
}

/// Cartesian product of the sweep axes, first axis outermost.
pub fn expand_sweep(axes: &[String]) -> CliResult<Vec<Vec<(String, String)>>> {
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let (key, values) = split_pair(axis)?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        grid = grid
            .iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut point = prefix.clone();
                    point.push((key.to_string(), v.to_string()));
                    point
                })
            })
            .collect();
    }
    Ok(grid)
}

fn dir_name(point: &[(String, String)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "=._-".contains(c) { c } else { '-' })
        .collect()
}

fn base_config(args: &HgnnArgs, g: &Globals) -> CliResult<RunConfig> {
    let mut cfg = g.run_config()?;
    let flags = [
        ("stage2.epochs", args.epochs.map(|v| v.to_string())),
        ("stage2.s", args.s.map(|v| v.to_string())),
        ("stage2.anchor_ratio", args.anchor_ratio.map(|v| v.to_string())),
        ("ablation", args.ablation.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg = apply_override(&cfg, key, &v)?;
        }
    }
    for o in &args.overrides {
        let (k, v) = split_pair(o)?;
        cfg = apply_override(&cfg, k, v)?;
    }
    Ok(cfg)
}

pub fn pretrain_hgnn(args: &HgnnArgs, g: &Globals) -> CliResult<()> {
    let base = base_config(args, g)?;
    let ds = load_dataset(&args.data)?;
    let encoder = match &args.encoder {
        Some(path) => {
            let bytes = with_path(path, std::fs::read(path).map_err(Into::into))?;
            Some(with_path(path, TextEncoder::read_from(&mut bytes.as_slice()))?)
        }
        None => None,
    };
    let out = g.out()?;
    if args.sweep.is_empty() {
        let record = train_one(&base, &ds, encoder.as_ref(), out, args)?;
        return g.emit(&record, || summary_line(&record));
    }
    let mut runs = Vec::new();
    for point in expand_sweep(&args.sweep)? {
        let mut cfg = base.clone();
        for (k, v) in &point {
            cfg = apply_override(&cfg, k, v)?;
        }
        runs.push((out.join(dir_name(&point)), cfg));
    }
    let records: Vec<CliResult<RunRecord>> = runs
        .par_iter()
        .map(|(dir, cfg)| train_one(cfg, &ds, encoder.as_ref(), dir, args))
        .collect();
    let records = records.into_iter().collect::<CliResult<Vec<_>>>()?;
    g.emit(&records, || records.iter().map(summary_line).collect::<Vec<_>>().join("\n"))
}

fn summary_line(r: &RunRecord) -> String {
    format!(
        "{}: {} epochs, final loss {}, mean subgraph hyperedges {:.3}",
        r.name,
        r.epochs,
        r.final_loss.map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into()),
        r.mean_subgraph_hyperedges
    )
}

fn train_one(
    cfg: &RunConfig,
    ds: &Dataset,
    given: Option<&TextEncoder>,
    dir: &Path,
    args: &HgnnArgs,
) -> CliResult<RunRecord> {
    std::fs::create_dir_all(dir)?;
    let ckpt_path = dir.join("checkpoint.bin");
    let resumed = if args.resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        ckpt.check_config(cfg)?;
        log::info!("resuming {} at epoch {}", dir.display(), ckpt.stage2.epoch);
        Some(ckpt)
    } else {
        None
    };
    let t1 = Instant::now();
    let encoder = match (&resumed, given) {
        (Some(c), _) => c.encoder.clone(),
        (None, Some(e)) => e.clone(),
        (None, None) if cfg.ablation.disable_stage1_pretrain => initial_encoder(cfg)?,
        (None, None) => {
            let (enc, trace) = run_stage1(cfg, &ds.hypergraph, &ds.corpus)?;
            std::fs::write(dir.join("stage1_trace.csv"), stage1_csv(&trace))?;
            enc
        }
    };
    let stage1_seconds = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let mut trainer = Stage2Trainer::new(cfg, &ds.hypergraph, &ds.corpus, &encoder)?;
    if let Some(c) = resumed {
        trainer.restore(c.stage2)?;
    }
    let total = cfg.stage2.epochs;
    let every = args.checkpoint_every.filter(|&n| n > 0).unwrap_or(total.max(1));
    loop {
        let next = ((trainer.state().epoch / every) + 1) * every;
        trainer.run_until(next.min(total))?;
        let ckpt = Checkpoint {
            config_hash: cfg.hash(),
            encoder: encoder.clone(),
            stage2: trainer.state().clone(),
        };
        ckpt.save(&ckpt_path)?;
        if trainer.state().epoch >= total {
            break;
        }
    }
    let stage2_seconds = t2.elapsed().as_secs_f64();
    let mean_size = trainer.mean_subgraph_hyperedges(total)?;
    let state = trainer.into_state();
    std::fs::write(dir.join("loss_trace.csv"), trace_to_csv(&state.trace))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    let (zv, _) = embed_nodes(&ds.hypergraph, &ds.corpus, &encoder, &state.params)?;
    write_embeddings(&dir.join("embeddings.bin"), &zv)?;
    let record = RunRecord {
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        s: cfg.stage2.s,
        anchor_ratio: cfg.stage2.anchor_ratio,
        ablation: cfg.ablation.name(),
        epochs: state.epoch,
        mean_subgraph_hyperedges: mean_size,
        final_loss: state.trace.last().map(|r| r.loss.total),
    };
    write_json(&dir.join(RUN_FILE), &record)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            stage1_seconds,
            stage2_seconds,
        },
    )?;
    if args.eval_node {
        let report = linear_probe(&zv, &ds.labels, &SplitSpec::node_classification(cfg.seed), None)?
            .with_config_hash(cfg.hash());
        write_json(&dir.join(NODE_EVAL_FILE), &report)?;
    }
    Ok(record)
}
