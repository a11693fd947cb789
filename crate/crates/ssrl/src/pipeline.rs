//! End-to-end operations shared by the CLI and the tests.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ssrl_core::eval::{self, EvalReport};
use ssrl_core::kg::{KnowledgeGraph, MaskPolicy};
use ssrl_core::labels::{generate_labels, label_coverage, CoverageReport, LabelConfig, LabelSet};
use ssrl_core::policy::PolicyParams;
use ssrl_core::train::{self, Stage, TrainError, TrainLog, Trainer};
use ssrl_core::{Query, Real};

use crate::checkpoint::{vocab_fingerprint, Checkpoint, CheckpointError, CheckpointMeta};
use crate::config::{mask_name, ConfigError, RunConfig, CODE_VERSION};
use crate::data::{write_text, DataError, Dataset};
use crate::label_cache::{CacheError, LabelCache};
use crate::output::{self, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("label cache: {0}")]
    Cache(#[from] CacheError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Metrics(#[from] eval::MetricsError),
}

/// Labels every query in order; unlabelable queries are skipped and show up
/// in the coverage report.
pub fn label_queries(graph: &KnowledgeGraph, queries: &[Query], depth: usize, mask: MaskPolicy) -> (LabelCache, CoverageReport) {
    let cfg = LabelConfig { depth, mask };
    let sets: Vec<LabelSet> =
        queries.par_iter().map(|q| generate_labels(graph, q, &cfg).ok()).collect::<Vec<_>>().into_iter().flatten().collect();
    let coverage = label_coverage(&sets, queries);
    (LabelCache::new(graph, sets), coverage)
}

pub fn checkpoint_for<T: Real>(
    params: &PolicyParams<T>,
    cfg: &RunConfig,
    graph: &KnowledgeGraph,
    stage: &str,
    batch: usize,
    baseline: f64,
) -> Checkpoint {
    let dims = params.dims();
    Checkpoint {
        params: params.cast(),
        meta: CheckpointMeta {
            code_version: CODE_VERSION.to_string(),
            seed: cfg.hyper.seed,
            stage: stage.to_string(),
            epoch: if stage == "init" { 0 } else { cfg.hyper.sl_epochs },
            batch,
            config_hash: cfg.hash(),
            horizon: cfg.hyper.horizon,
            max_actions: graph.max_actions(),
            mask: mask_name(cfg.hyper.mask).to_string(),
            entity_count: graph.entity_count(),
            relation_count: graph.relation_count(),
            vocab_hash: vocab_fingerprint(graph),
            embed: dims.embed,
            hidden: dims.hidden,
            ff: dims.ff,
            baseline,
        },
    }
}

/// Files written by [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub out: PathBuf,
    pub log: TrainLog,
    pub sl_checkpoint: Option<Checkpoint>,
    pub checkpoint: Checkpoint,
}

pub const SL_CHECKPOINT: &str = "checkpoint_sl.bin";
pub const FINAL_CHECKPOINT: &str = "checkpoint.bin";
pub const RESOLVED_CONFIG: &str = "resolved.cfg";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Training labels: the given cache (validated) or freshly generated ones.
pub fn training_labels(
    cfg: &RunConfig,
    ds: &Dataset,
    queries: &[Query],
    cache: Option<LabelCache>,
) -> Result<Vec<LabelSet>, PipelineError> {
    if cfg.hyper.sl_epochs == 0 {
        return Ok(Vec::new());
    }
    let cache = match cache {
        Some(c) => {
            c.validate(&ds.graph, cfg.hyper.mask)?;
            c
        }
        None => label_queries(&ds.graph, queries, cfg.label_depth(), cfg.hyper.mask).0,
    };
    Ok(cache.sets)
}

/// Runs the two-stage schedule and writes the resolved config, the
/// boundary and final checkpoints, the log and the curves into `out`.
/// With `resume` (a boundary checkpoint) the supervised stage is skipped.
pub fn run_training(
    cfg: &RunConfig,
    ds: &Dataset,
    cache: Option<LabelCache>,
    out: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainArtifacts, PipelineError> {
    write_text(&out.join(RESOLVED_CONFIG), &cfg.resolved())?;
    let queries = ds.train_queries(&cfg.train_relations)?;
    let h = &cfg.hyper;
    let (params, log, sl_checkpoint) = match resume {
        Some(ck) => {
            ck.check_graph(&ds.graph)?;
            if ck.meta.stage != "sl" {
                return Err(ConfigError::Invalid(format!("can only resume from a {SL_CHECKPOINT} (stage `sl`), got `{}`", ck.meta.stage)).into());
            }
            let mut trainer = Trainer::with_params(&ds.graph, h.clone(), ck.params.clone())?;
            trainer.set_dev(ds.dev.clone(), ds.known.clone());
            trainer.resume(ck.meta.batch, ck.meta.baseline);
            trainer.run_rl(&queries)?;
            let (p, log) = trainer.into_parts();
            (p, log, None)
        }
        None => {
            let labels = training_labels(cfg, ds, &queries, cache)?;
            let o = train::train::<f32>(&ds.graph, &labels, &queries, &ds.dev, &ds.known, h)?;
            let sl = checkpoint_for(&o.sl_params, cfg, &ds.graph, "sl", o.sl_batches, o.sl_baseline);
            sl.save(&out.join(SL_CHECKPOINT))?;
            (o.params, o.log, Some(sl))
        }
    };
    let next = log.rows().last().map_or(0, |r| r.batch + 1);
    let baseline = log.rows().last().map_or(0.0, |r| r.baseline);
    let stage = match log.rows().last().map(|r| r.stage) {
        Some(Stage::Rl) => "rl",
        Some(Stage::Sl) => "sl",
        None => "init",
    };
    let checkpoint = checkpoint_for(&params, cfg, &ds.graph, stage, next, baseline);
    checkpoint.save(&out.join(FINAL_CHECKPOINT))?;
    output::write_train_log(&log, &out.join(TRAIN_LOG))?;
    if !log.is_empty() {
        output::emit_curves(&log, out)?;
    }
    Ok(TrainArtifacts { out: out.to_path_buf(), log, sl_checkpoint, checkpoint })
}

/// Beam evaluation of a checkpoint using its own horizon.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    ds: &Dataset,
    queries: &[Query],
    beam: usize,
    filtered: bool,
) -> Result<EvalReport, PipelineError> {
    ck.check_graph(&ds.graph)?;
    let cfg = eval::EvalConfig { beam: ck.beam_config(beam)?, filtered };
    Ok(eval::evaluate(&ds.graph, &ck.params, queries, &ds.known, &cfg)?)
}

/// Heatmap over supervised warm-up lengths, evaluated on `eval_queries`.
pub fn run_sweep(
    cfg: &RunConfig,
    ds: &Dataset,
    cache: Option<LabelCache>,
    epochs: &[usize],
    eval_queries: &[Query],
) -> Result<Vec<train::HeatmapCell>, PipelineError> {
    let queries = ds.train_queries(&cfg.train_relations)?;
    let max_epochs = epochs.iter().copied().max().unwrap_or(0);
    let probe = RunConfig { hyper: train::Hyperparams { sl_epochs: max_epochs, ..cfg.hyper.clone() }, ..cfg.clone() };
    let labels = training_labels(&probe, ds, &queries, cache)?;
    Ok(train::sweep::<f32>(&ds.graph, &labels, &queries, eval_queries, &ds.known, &cfg.hyper, epochs)?)
}
