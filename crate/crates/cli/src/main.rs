//! `hitec`: data preparation, two-stage pretraining, evaluation and reporting.

mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hitec::dataset::{parse_records, reconstruct_jsonl, Dataset, DatasetStats, Record};
use hitec::eval::{hyperedge_prediction, linear_probe, EvalReport, MlpConfig, SplitSpec};
use hitec::report::{discover_runs, summarize, write_report, RunRecord, EDGE_EVAL_FILE, NODE_EVAL_FILE, RUN_FILE};
use hitec::rng::{stream_rng, Stream};
use hitec::synth::{generate, SynthParams};
use hitec::text::{read_embeddings, write_embeddings};
use hitec::trainer::{embed_nodes, run_stage1, Checkpoint, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hitec::Error),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: hitec::Error },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) | CliError::Input { source: e, .. } if e.is_numeric() => 4,
            CliError::Core(_) | CliError::Input { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hitec", version, about = "Hierarchical contrastive pretraining on text-attributed hypergraphs")]
struct Cli {
    /// TOML run configuration; required by training commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON to stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads; also bounds concurrent sweep runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a JSON-lines dataset and write a binary bundle.
    Ingest {
        input: PathBuf,
    },
    /// Turn pairwise edges into maximal-clique hyperedges. Writes a full
    /// dataset when node records are present, hyperedge lines otherwise.
    Reconstruct {
        input: PathBuf,
    },
    /// Generate the seeded block-structured fixture.
    Synth(SynthArgs),
    /// Stage 1: structure-aware text-encoder pretraining.
    PretrainText {
        #[arg(long)]
        data: PathBuf,
    },
    /// Stage 2: contrastive hypergraph-encoder pretraining.
    PretrainHgnn(run::HgnnArgs),
    /// Node and hyperedge embeddings from a checkpoint.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Linear-probe node classification.
    EvalNode {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Fixed L2 strength; chosen on validation when absent.
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        inits: Option<usize>,
    },
    /// Hyperedge prediction against clique negatives.
    EvalEdge {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        mlp_epochs: Option<usize>,
    },
    /// Aggregate run directories into summary JSON and CSV series.
    Report {
        runs: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m_in: Option<usize>,
    #[arg(long)]
    m_cross: Option<usize>,
    #[arg(long)]
    text_len: Option<usize>,
    #[arg(long)]
    purity: Option<f64>,
}

impl SynthArgs {
    fn params(&self, seed: u64) -> SynthParams {
        let d = SynthParams::default();
        SynthParams {
            n: self.n.unwrap_or(d.n),
            blocks: self.blocks.unwrap_or(d.blocks),
            k: self.k.unwrap_or(d.k),
            m_in: self.m_in.unwrap_or(d.m_in),
            m_cross: self.m_cross.unwrap_or(d.m_cross),
            text_len: self.text_len.unwrap_or(d.text_len),
            purity: self.purity.unwrap_or(d.purity),
            seed,
            ..d
        }
    }
}

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub json: bool,
    pub jobs: Option<usize>,
}

impl Globals {
    pub fn out(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required for this command".into()))
    }

    /// Config file with the seed flag applied.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::Usage("--config is required for training commands".into()))?;
        let mut cfg = with_path(path, RunConfig::load(path))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> CliResult<()> {
        if self.json {
            println!("{}", serde_json::to_string(value)?);
        } else {
            println!("{}", human());
        }
        Ok(())
    }
}

/// Attaches `path` to errors raised while reading it.
pub fn with_path<T>(path: &Path, r: hitec::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    with_path(path, Dataset::load(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_stats(g: &Globals, stats: &DatasetStats) -> CliResult<()> {
    g.emit(stats, || stats.to_string())
}

fn report_line(r: &EvalReport) -> String {
    format!("{}: {:.2} ± {:.2} over {} runs", r.task, r.mean, r.std, r.per_split.len())
}

/// Config hash of the run that produced `embeddings`, if it sits in a run
/// directory.
fn sibling_config_hash(embeddings: &Path) -> String {
    let run = embeddings.parent().map(|d| d.join(RUN_FILE));
    run.and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
        .map(|r| r.config_hash)
        .unwrap_or_default()
}

fn dispatch(command: Command, g: &Globals) -> CliResult<()> {
    match command {
        Command::Ingest { input } => {
            let ds = load_dataset(&input)?;
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            ds.save_bundle(&out.join("dataset.bin"))?;
            std::fs::write(out.join("dataset.jsonl"), ds.to_jsonl())?;
            print_stats(g, &ds.stats())
        }
        Command::Reconstruct { input } => {
            let text = with_path(&input, std::fs::read_to_string(&input).map_err(Into::into))?;
            let records = with_path(&input, parse_records(text.as_bytes()))?;
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            if records.iter().any(|(_, r)| matches!(r, Record::Node(_))) {
                let ds = with_path(&input, Dataset::from_records(&records))?;
                std::fs::write(out.join("dataset.jsonl"), ds.to_jsonl())?;
                return print_stats(g, &ds.stats());
            }
            let jsonl = with_path(&input, reconstruct_jsonl(text.as_bytes()))?;
            std::fs::write(out.join("hyperedges.jsonl"), &jsonl)?;
            let count = jsonl.lines().count();
            g.emit(&serde_json::json!({ "num_hyperedges": count }), || {
                format!("{count} hyperedges")
            })
        }
        Command::Synth(args) => {
            let ds = generate(&args.params(g.seed.unwrap_or(0)))?;
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("dataset.jsonl"), ds.to_jsonl())?;
            print_stats(g, &ds.stats())
        }
        Command::PretrainText { data } => {
            let cfg = g.run_config()?;
            let ds = load_dataset(&data)?;
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            let (encoder, trace) = run_stage1(&cfg, &ds.hypergraph, &ds.corpus)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("encoder.bin"))?);
            encoder.write_to(&mut w)?;
            drop(w);
            std::fs::write(out.join("stage1_trace.csv"), run::stage1_csv(&trace))?;
            std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
            let summary = serde_json::json!({
                "epochs": trace.len(),
                "final_loss": trace.last(),
                "config_hash": cfg.hash(),
            });
            g.emit(&summary, || match trace.last() {
                Some(l) => format!("stage 1 finished after {} epochs, loss {l:.6}", trace.len()),
                None => "stage 1 skipped".into(),
            })
        }
        Command::PretrainHgnn(args) => run::pretrain_hgnn(&args, g),
        Command::Embed { data, checkpoint } => {
            let ds = load_dataset(&data)?;
            let ckpt = with_path(&checkpoint, Checkpoint::load(&checkpoint))?;
            if g.config.is_some() {
                ckpt.check_config(&g.run_config()?)?;
            }
            let (zv, ze) = embed_nodes(&ds.hypergraph, &ds.corpus, &ckpt.encoder, &ckpt.stage2.params)?;
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            write_embeddings(&out.join("embeddings.bin"), &zv)?;
            write_embeddings(&out.join("edge_embeddings.bin"), &ze)?;
            let summary = serde_json::json!({"nodes": zv.nrows(), "hyperedges": ze.nrows(), "dim": zv.ncols()});
            g.emit(&summary, || format!("{} node and {} hyperedge embeddings", zv.nrows(), ze.nrows()))
        }
        Command::EvalNode {
            data,
            embeddings,
            l2,
            splits,
            inits,
        } => {
            let ds = load_dataset(&data)?;
            let z = with_path(&embeddings, read_embeddings(&embeddings))?;
            let mut spec = SplitSpec::node_classification(g.seed.unwrap_or(0));
            spec.num_splits = splits.unwrap_or(spec.num_splits);
            spec.inits_per_split = inits.unwrap_or(spec.inits_per_split);
            let report = linear_probe(&z, &ds.labels, &spec, l2)?.with_config_hash(sibling_config_hash(&embeddings));
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            write_json(&out.join(NODE_EVAL_FILE), &report)?;
            g.emit(&report, || report_line(&report))
        }
        Command::EvalEdge {
            data,
            embeddings,
            splits,
            mlp_epochs,
        } => {
            let ds = load_dataset(&data)?;
            let z = with_path(&embeddings, read_embeddings(&embeddings))?;
            let seed = g.seed.unwrap_or(0);
            let mut spec = SplitSpec::hyperedge_prediction(seed);
            spec.num_splits = splits.unwrap_or(spec.num_splits);
            let mut mlp = MlpConfig::default();
            mlp.epochs = mlp_epochs.unwrap_or(mlp.epochs);
            let mut rng = stream_rng(seed, Stream::Negatives, 0);
            let report = hyperedge_prediction(&z, &ds.hypergraph, &spec, &mlp, &mut rng)?
                .with_config_hash(sibling_config_hash(&embeddings));
            let out = g.out()?;
            std::fs::create_dir_all(out)?;
            write_json(&out.join(EDGE_EVAL_FILE), &report)?;
            g.emit(&report, || report_line(&report))
        }
        Command::Report { runs } => {
            let summary = summarize(&discover_runs(&runs)?)?;
            let out = g.out.clone().unwrap_or_else(|| runs.join("report"));
            let written = write_report(&summary, &out)?;
            g.emit(&summary, || {
                written
                    .iter()
                    .map(|p| format!("wrote {}", p.display()))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let g = Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        json: cli.json,
        jobs: cli.jobs,
    };
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(cli.command, &g) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
