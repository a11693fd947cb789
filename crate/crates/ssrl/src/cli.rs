//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! invariant failure. `SSRL_THREADS` caps the worker count.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ssrl_core::eval;
use ssrl_core::kg::{compute_stats, DEFAULT_MAX_ACTIONS};
use ssrl_core::synth::{make_synthetic, SynthGraph, SynthKind};
use ssrl_core::train::TrainError;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{self, ConfigError, RunConfig, CODE_VERSION};
use crate::data::{self, DataError, Dataset, Split};
use crate::label_cache::{CacheError, LabelCache};
use crate::output::{self, OutputError};
use crate::pipeline::{self, PipelineError};

#[derive(Parser, Debug)]
#[command(name = "ssrl", version, about = "Label-pretrained policy-gradient agent for knowledge graph query answering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Graph statistics as JSON.
    Stats(StatsArgs),
    /// Generate the supervised label cache.
    GenLabels(GenLabelsArgs),
    /// Supervised warm-up followed by REINFORCE.
    Train(TrainArgs),
    /// Beam-search evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Train once per warm-up length and write the delta heatmap.
    Sweep(SweepArgs),
    /// Print decoded reasoning paths for one query.
    Paths(PathsArgs),
    /// Write a generated dataset directory.
    MakeSynthetic(SynthArgs),
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Dataset directory or a single triple file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Query split (`train`, `dev`, `test`) for the k-hop reachability fraction.
    #[arg(long)]
    pub queries: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ACTIONS)]
    pub max_actions: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenLabelsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Label only the first N training queries.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Comma-separated relation names to label.
    #[arg(long, value_delimiter = ',')]
    pub relations: Vec<String>,
    #[arg(long, default_value = "query_edge")]
    pub mask: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ACTIONS)]
    pub max_actions: usize,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override, e.g. `--set rl.beta=0.05`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut sets = Vec::new();
        if let Some(p) = &self.preset {
            sets.push(format!("preset={p}"));
        }
        if let Some(g) = &self.graph {
            sets.push(format!("graph={}", g.display()));
        }
        if let Some(l) = &self.labels {
            sets.push(format!("labels={}", l.display()));
        }
        if let Some(o) = &self.out {
            sets.push(format!("out={}", o.display()));
        }
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        sets.extend(self.set.iter().cloned());
        RunConfig::load(self.config.as_deref(), &sets)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from a supervised-boundary checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 100)]
    pub beam: usize,
    /// Raw instead of filtered ranking.
    #[arg(long)]
    pub raw: bool,
    /// Include per-query ranks and candidates.
    #[arg(long)]
    pub per_query: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Supervised epoch counts; must include 0.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub epochs: Vec<usize>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct PathsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// `head,relation` or `head,relation,tail`.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    #[arg(long, default_value_t = 100)]
    pub beam: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "composition")]
    pub kind: String,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        CliError::Data(format!("label cache: {e}"))
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(format!("checkpoint: {e}"))
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::EmptyLabels | TrainError::NoQueries | TrainError::Env(_) | TrainError::Metrics(_) => {
                CliError::Data(e.to_string())
            }
            TrainError::Policy(_) | TrainError::NonFinite(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(e) => e.into(),
            PipelineError::Data(e) => e.into(),
            PipelineError::Cache(e) => e.into(),
            PipelineError::Checkpoint(e) => e.into(),
            PipelineError::Output(e) => e.into(),
            PipelineError::Train(e) => e.into(),
            PipelineError::Metrics(e) => CliError::Data(e.to_string()),
        }
    }
}

/// Sizes the global worker pool from `SSRL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SSRL_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CliError::Config(format!("SSRL_THREADS=`{v}` is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    Split::parse(s).ok_or_else(|| CliError::Config(format!("unknown split `{s}`")))
}

fn parse_mask(s: &str) -> Result<ssrl_core::kg::MaskPolicy, CliError> {
    config::parse_mask(s).ok_or_else(|| CliError::Config(format!("unknown mask `{s}` (query_edge, all_answers)")))
}

fn require_path(p: &Option<PathBuf>, key: &'static str) -> Result<PathBuf, CliError> {
    p.clone().ok_or_else(|| ConfigError::Missing(key).into())
}

/// Writes to stdout; a closed pipe (`ssrl ... | head`) is not an error.
fn print_lines(lines: &[String]) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    for line in lines {
        match writeln!(out, "{line}") {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            Err(e) => return Err(CliError::Data(format!("stdout: {e}"))),
        }
    }
    Ok(())
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => output::write_json(value, p)?,
        None => print_lines(&[serde_json::to_string_pretty(value).expect("json values serialize")])?,
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats(a) => {
            let (graph, queries) = if a.graph.is_dir() {
                let ds = Dataset::load(&a.graph, a.max_actions)?;
                let queries = a.queries.as_deref().map(parse_split).transpose()?.map(|s| ds.split(s).to_vec());
                let graph = if queries.is_some() {
                    ds.graph
                } else {
                    data::load_graph_file(&Dataset::graph_path(&a.graph), a.max_actions)?
                };
                (graph, queries)
            } else {
                (data::load_graph_file(&a.graph, a.max_actions)?, None)
            };
            let stats = compute_stats(&graph, queries.as_deref(), a.k);
            emit(&output::stats_json(&stats, graph.vocab()), a.out.as_deref())
        }
        Command::GenLabels(a) => {
            if a.depth == 0 {
                return Err(CliError::Config("--depth must be at least 1".into()));
            }
            let mask = parse_mask(&a.mask)?;
            let ds = Dataset::load(&a.graph, a.max_actions)?;
            let mut queries = ds.train_queries(&a.relations)?;
            if let Some(n) = a.limit {
                queries.truncate(n);
            }
            let (cache, coverage) = pipeline::label_queries(&ds.graph, &queries, a.depth, mask);
            cache.save(&a.out)?;
            emit(&output::coverage_json(&coverage, ds.graph.vocab()), None)
        }
        Command::Train(a) => {
            let cfg = a.config.resolve()?;
            let graph = require_path(&cfg.graph, "graph")?;
            let out = require_path(&cfg.out, "out")?;
            let ds = Dataset::load(&graph, cfg.max_actions)?;
            let cache = cfg.labels.as_deref().map(LabelCache::load).transpose()?;
            let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
            let art = pipeline::run_training(&cfg, &ds, cache, &out, resume)?;
            let last = art.log.rows().last();
            eprintln!(
                "{CODE_VERSION}: {} batches, final reward {:.4}, wrote {}",
                art.log.len(),
                last.map_or(0.0, |r| r.mean_reward),
                art.out.display()
            );
            Ok(())
        }
        Command::Eval(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let ds = Dataset::load(&a.graph, ck.meta.max_actions)?;
            let queries = ds.split(parse_split(&a.split)?);
            let report = pipeline::evaluate_checkpoint(&ck, &ds, queries, a.beam, !a.raw)?;
            emit(&output::report_json(&report, ds.graph.vocab(), a.per_query), a.out.as_deref())
        }
        Command::Sweep(a) => {
            let cfg = a.config.resolve()?;
            let graph = require_path(&cfg.graph, "graph")?;
            let out = require_path(&cfg.out, "out")?;
            let ds = Dataset::load(&graph, cfg.max_actions)?;
            let cache = cfg.labels.as_deref().map(LabelCache::load).transpose()?;
            let queries = ds.split(parse_split(&a.split)?).to_vec();
            data::write_text(&out.join(pipeline::RESOLVED_CONFIG), &cfg.resolved())?;
            let cells = pipeline::run_sweep(&cfg, &ds, cache, &a.epochs, &queries)?;
            output::write_heatmap(&cells, &out.join("heatmap.csv"))?;
            Ok(())
        }
        Command::Paths(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let ds = Dataset::load(&a.graph, ck.meta.max_actions)?;
            ck.check_graph(&ds.graph)?;
            let (query, has_tail) = ds.parse_query(&a.query)?;
            let cfg = ck.beam_config(a.beam)?;
            let beams = eval::beam_search_with(&ds.graph, &ck.params, &query, &cfg);
            let answers = if has_tail { vec![query.target] } else { ds.known.get(query.source, query.relation).to_vec() };
            let lines = eval::decode_paths(&beams.beams, ds.graph.vocab(), query.source, &answers, a.top);
            print_lines(&lines)
        }
        Command::MakeSynthetic(a) => {
            let kind = SynthKind::parse(&a.kind)
                .ok_or_else(|| CliError::Config(format!("unknown kind `{}` (chain, grid, composition)", a.kind)))?;
            let g = make_synthetic(kind, a.size, a.seed).map_err(|e| CliError::Config(e.to_string()))?;
            for (name, triples) in [("train.txt", &g.train), ("dev.txt", &g.dev), ("test.txt", &g.test)] {
                data::write_text(&a.out.join(name), &SynthGraph::tsv(triples))?;
            }
            Ok(())
        }
    }
}
