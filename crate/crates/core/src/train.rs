//! Two-stage training: supervised epochs on path labels, then REINFORCE.
//!
//! Every rollout draws from its own generator seeded by
//! `(seed, stage, batch, query position, rollout)`; per-query gradients are
//! summed in query order, so results do not depend on thread count.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{EnvConfig, EnvError, EnvState, SlOutcome};
use crate::eval::{self, EvalConfig, KnownAnswers, Metrics, MetricsError};
use crate::kg::{KnowledgeGraph, MaskPolicy, Query, NO_OP};
use crate::labels::LabelSet;
use crate::objective::{compute_returns, label_cross_entropy, label_loss_grad, policy_gradient_grad};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::par_map;
use crate::policy::{backward_into, Dims, Gradients, PolicyError, PolicyParams, Tape};
use crate::real::Real;
use crate::rng::{self, sample_categorical};

/// Entropy weight and baseline decay of one stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageParams {
    pub beta: f64,
    pub lambda: f64,
}

/// Per-dataset stage constants and best warm-up length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub sl: StageParams,
    pub rl: StageParams,
    pub sl_epochs: usize,
}

pub const PRESETS: [DatasetPreset; 4] = [
    DatasetPreset {
        name: "nell-995",
        sl: StageParams { beta: 0.02, lambda: 0.02 },
        rl: StageParams { beta: 0.05, lambda: 0.02 },
        sl_epochs: 5,
    },
    DatasetPreset {
        name: "fb15k-237",
        sl: StageParams { beta: 0.0002, lambda: 0.02 },
        rl: StageParams { beta: 0.02, lambda: 0.02 },
        sl_epochs: 3,
    },
    DatasetPreset {
        name: "wn18rr",
        sl: StageParams { beta: 0.02, lambda: 0.002 },
        rl: StageParams { beta: 0.05, lambda: 0.05 },
        sl_epochs: 2,
    },
    DatasetPreset {
        name: "fb60k",
        sl: StageParams { beta: 0.02, lambda: 0.02 },
        rl: StageParams { beta: 0.2, lambda: 0.02 },
        sl_epochs: 7,
    },
];

pub fn preset(name: &str) -> Option<&'static DatasetPreset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// How the per-step supervised losses of one rollout are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub dims: ModelDims,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: Option<f64>,
    pub gamma: f64,
    pub sl: StageParams,
    pub rl: StageParams,
    pub sl_epochs: usize,
    /// Optional cap on supervised updates across all epochs.
    pub sl_max_steps: Option<usize>,
    pub sl_reduction: StepReduction,
    pub rl_batches: usize,
    pub batch_size: usize,
    pub rollouts_per_query: usize,
    pub horizon: usize,
    pub beam_width: usize,
    pub seed: u64,
    pub mask: MaskPolicy,
    pub consume_step_on_reject: bool,
    /// Supervised resamples per step before the best labelled action is forced.
    pub max_resamples: usize,
    /// Dev evaluation every this many batches; 0 means only at stage ends.
    pub eval_every: usize,
    pub filtered: bool,
}

/// Network widths; vocabulary sizes come from the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub embed: usize,
    pub hidden: usize,
    pub ff: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { embed: 64, hidden: 64, ff: 128 }
    }
}

impl ModelDims {
    pub fn for_graph(&self, graph: &KnowledgeGraph) -> Dims {
        Dims {
            entities: graph.entity_count(),
            relations: graph.relation_count(),
            embed: self.embed,
            hidden: self.hidden,
            ff: self.ff,
        }
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        let fb = preset("fb15k-237").unwrap();
        Hyperparams {
            dims: ModelDims::default(),
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            max_grad_norm: Some(5.0),
            gamma: 1.0,
            sl: fb.sl,
            rl: fb.rl,
            sl_epochs: fb.sl_epochs,
            sl_max_steps: None,
            sl_reduction: StepReduction::Sum,
            rl_batches: 1000,
            batch_size: 128,
            rollouts_per_query: 20,
            horizon: 3,
            beam_width: 100,
            seed: 42,
            mask: MaskPolicy::QueryEdge,
            consume_step_on_reject: false,
            max_resamples: 32,
            eval_every: 0,
            filtered: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(String::from(m)));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        for s in [self.sl, self.rl] {
            if !(s.beta >= 0.0) {
                return bad("beta must be non-negative");
            }
            if !(0.0..=1.0).contains(&s.lambda) {
                return bad("lambda must lie in [0, 1]");
            }
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.horizon == 0 || self.batch_size == 0 || self.rollouts_per_query == 0 || self.beam_width == 0 {
            return bad("horizon, batch size, rollouts and beam width must be positive");
        }
        Ok(())
    }

    pub fn apply_preset(&mut self, p: &DatasetPreset) {
        self.sl = p.sl;
        self.rl = p.rl;
        self.sl_epochs = p.sl_epochs;
    }

    fn env(&self) -> EnvConfig {
        EnvConfig {
            horizon: self.horizon,
            mask: self.mask,
            consume_step_on_reject: self.consume_step_on_reject,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            beam: eval::BeamConfig { width: self.beam_width, horizon: self.horizon, mask: self.mask },
            filtered: self.filtered,
        }
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label cache is empty")]
    EmptyLabels,
    #[error("no training queries")]
    NoQueries,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("parameters became non-finite after batch {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Sl,
    Rl,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sl => "sl",
            Stage::Rl => "rl",
        }
    }
}

/// Dev metrics captured during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DevSnapshot {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub hits20: f64,
    pub mrr: f64,
}

impl From<&Metrics> for DevSnapshot {
    fn from(m: &Metrics) -> Self {
        let h = |k| m.hits_at(k).unwrap_or(0.0);
        DevSnapshot { hits1: h(1), hits3: h(3), hits10: h(10), hits20: h(20), mrr: m.mrr }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub stage: Stage,
    /// Global batch index, monotone across stages.
    pub batch: usize,
    pub mean_reward: f64,
    pub sl_loss: Option<f64>,
    pub entropy: f64,
    pub baseline: f64,
    pub dev: Option<DevSnapshot>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        debug_assert!(self.rows.last().map_or(true, |r| r.batch < row.batch));
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn last_mut(&mut self) -> Option<&mut LogRow> {
        self.rows.last_mut()
    }
}

/// Per-query accumulation of one batch.
struct QueryPass<T> {
    grads: Gradients<T>,
    sl_loss: f64,
    entropy: f64,
    steps: usize,
    reward: f64,
    rollouts: usize,
    return_sum: f64,
    return_count: usize,
}

/// Mutable training state around one parameter set.
pub struct Trainer<'g, T> {
    graph: &'g KnowledgeGraph,
    hyper: Hyperparams,
    params: PolicyParams<T>,
    optimizer: Optimizer<T>,
    baseline: f64,
    log: TrainLog,
    next_batch: usize,
    dev: Vec<Query>,
    known: KnownAnswers,
}

const SL_TAG: u64 = 0x51;
const RL_TAG: u64 = 0x52;
const ORDER_TAG: u64 = 0x4f;

impl<'g, T: Real> Trainer<'g, T> {
    /// Fresh parameters initialised from `hyper.seed`.
    pub fn new(graph: &'g KnowledgeGraph, hyper: Hyperparams) -> Result<Self, TrainError> {
        let params = PolicyParams::init(hyper.dims.for_graph(graph), hyper.seed)?;
        Self::with_params(graph, hyper, params)
    }

    pub fn with_params(
        graph: &'g KnowledgeGraph,
        hyper: Hyperparams,
        params: PolicyParams<T>,
    ) -> Result<Self, TrainError> {
        hyper.validate()?;
        let expect = hyper.dims.for_graph(graph);
        if params.dims() != expect {
            return Err(TrainError::Config(alloc::format!(
                "parameter shape {:?} does not match graph/config {:?}",
                params.dims(),
                expect
            )));
        }
        Ok(Trainer {
            graph,
            optimizer: Optimizer::new(hyper.optimizer()),
            hyper,
            params,
            baseline: 0.0,
            log: TrainLog::default(),
            next_batch: 0,
            dev: Vec::new(),
            known: KnownAnswers::default(),
        })
    }

    /// Queries evaluated for the dev snapshots, with their filter set.
    pub fn set_dev(&mut self, dev: Vec<Query>, known: KnownAnswers) {
        self.dev = dev;
        self.known = known;
    }

    /// Resumes counters from a checkpoint.
    pub fn resume(&mut self, next_batch: usize, baseline: f64) {
        self.next_batch = next_batch;
        self.baseline = baseline;
    }

    pub fn params(&self) -> &PolicyParams<T> {
        &self.params
    }

    pub fn into_parts(self) -> (PolicyParams<T>, TrainLog) {
        (self.params, self.log)
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn next_batch(&self) -> usize {
        self.next_batch
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    fn update_baseline(&mut self, lambda: f64, mean_return: f64) {
        self.baseline = lambda * self.baseline + (1.0 - lambda) * mean_return;
    }

    fn finish_batch(&mut self, stage: Stage, passes: Vec<QueryPass<T>>, lambda: f64) -> Result<(), TrainError> {
        let mut grads = Gradients::zeros(self.params.dims());
        let (mut loss, mut ent, mut steps, mut reward, mut rollouts) = (0.0, 0.0, 0usize, 0.0, 0usize);
        let (mut ret_sum, mut ret_n) = (0.0, 0usize);
        for p in &passes {
            grads.add_assign(&p.grads);
            loss += p.sl_loss;
            ent += p.entropy;
            steps += p.steps;
            reward += p.reward;
            rollouts += p.rollouts;
            ret_sum += p.return_sum;
            ret_n += p.return_count;
        }
        if rollouts == 0 {
            return Ok(());
        }
        grads.scale(T::from_f64(1.0 / rollouts as f64));
        self.optimizer.step(&mut self.params, &grads);
        let batch = self.next_batch;
        if !self.params.is_finite() {
            return Err(TrainError::NonFinite(batch));
        }
        if ret_n > 0 {
            self.update_baseline(lambda, ret_sum / ret_n as f64);
        }
        self.next_batch += 1;
        self.log.push(LogRow {
            stage,
            batch,
            mean_reward: reward / rollouts as f64,
            sl_loss: (stage == Stage::Sl).then(|| loss / rollouts as f64),
            entropy: if steps == 0 { 0.0 } else { ent / steps as f64 },
            baseline: self.baseline,
            dev: None,
        });
        if self.hyper.eval_every > 0 && (batch + 1) % self.hyper.eval_every == 0 {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Evaluates the dev queries and attaches the result to the last log row.
    pub fn snapshot(&mut self) -> Result<(), TrainError> {
        if self.dev.is_empty() {
            return Ok(());
        }
        let report = eval::evaluate(self.graph, &self.params, &self.dev, &self.known, &self.hyper.eval_config())?;
        if let Some(row) = self.log.last_mut() {
            row.dev = Some(DevSnapshot::from(&report.metrics));
        }
        Ok(())
    }

    /// One pass over the labelled queries in a seed-determined order.
    /// Returns the number of updates made.
    pub fn sl_epoch(&mut self, labels: &[LabelSet], epoch: usize, budget: Option<usize>) -> Result<usize, TrainError> {
        if labels.is_empty() {
            return Err(TrainError::EmptyLabels);
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        rng::shuffle(&mut order, &mut rng::stream(self.hyper.seed, &[SL_TAG, ORDER_TAG, epoch as u64]));
        let mut updates = 0;
        for (b, chunk) in order.chunks(self.hyper.batch_size).enumerate() {
            if budget.is_some_and(|max| updates >= max) {
                break;
            }
            let seed = self.hyper.seed;
            let (graph, hyper, params) = (self.graph, &self.hyper, &self.params);
            let passes = par_map(chunk, |pos, &qi| {
                let mut rng = rng::stream(seed, &[SL_TAG, epoch as u64, b as u64, pos as u64]);
                sl_rollout(graph, hyper, params, &labels[qi], &mut rng)
            });
            let passes = passes.into_iter().collect::<Result<Vec<_>, _>>()?;
            self.finish_batch(Stage::Sl, passes, self.hyper.sl.lambda)?;
            updates += 1;
        }
        Ok(updates)
    }

    /// Queries of RL batch `batch` drawn from an endless sequence of
    /// seed-shuffled passes over `queries`.
    pub fn rl_batch_queries(&self, queries: &[Query], batch: usize) -> Vec<Query> {
        let n = queries.len();
        let bs = self.hyper.batch_size;
        let mut out = Vec::with_capacity(bs);
        let mut cached: Option<(usize, Vec<usize>)> = None;
        for pos in batch * bs..(batch + 1) * bs {
            let (pass, i) = (pos / n, pos % n);
            if cached.as_ref().map_or(true, |(p, _)| *p != pass) {
                let mut order: Vec<usize> = (0..n).collect();
                rng::shuffle(&mut order, &mut rng::stream(self.hyper.seed, &[RL_TAG, ORDER_TAG, pass as u64]));
                cached = Some((pass, order));
            }
            out.push(queries[cached.as_ref().unwrap().1[i]]);
        }
        out
    }

    /// One REINFORCE update on the given queries.
    pub fn rl_batch(&mut self, batch_queries: &[Query], rl_index: usize) -> Result<(), TrainError> {
        let seed = self.hyper.seed;
        let baseline = self.baseline;
        let (graph, hyper, params) = (self.graph, &self.hyper, &self.params);
        let passes = par_map(batch_queries, |pos, q| {
            let mut pass = QueryPass::new(params.dims());
            for k in 0..hyper.rollouts_per_query {
                let mut rng = rng::stream(seed, &[RL_TAG, rl_index as u64, pos as u64, k as u64]);
                rl_rollout(graph, hyper, params, q, baseline, &mut rng, &mut pass)?;
            }
            Ok::<_, EnvError>(pass)
        });
        let passes = passes.into_iter().collect::<Result<Vec<_>, _>>()?;
        self.finish_batch(Stage::Rl, passes, self.hyper.rl.lambda)
    }

    /// All supervised epochs, then an optimizer reset for the next stage.
    pub fn run_sl(&mut self, labels: &[LabelSet]) -> Result<(), TrainError> {
        let mut budget = self.hyper.sl_max_steps;
        for epoch in 0..self.hyper.sl_epochs {
            if budget == Some(0) {
                break;
            }
            let done = self.sl_epoch(labels, epoch, budget)?;
            budget = budget.map(|b| b.saturating_sub(done));
        }
        if self.hyper.sl_epochs > 0 && self.hyper.eval_every == 0 {
            self.snapshot()?;
        }
        self.optimizer.reset();
        Ok(())
    }

    pub fn run_rl(&mut self, queries: &[Query]) -> Result<(), TrainError> {
        if queries.is_empty() {
            return Err(TrainError::NoQueries);
        }
        for b in 0..self.hyper.rl_batches {
            let batch = self.rl_batch_queries(queries, b);
            self.rl_batch(&batch, b)?;
        }
        if self.hyper.rl_batches > 0 && self.hyper.eval_every == 0 {
            self.snapshot()?;
        }
        Ok(())
    }
}

impl<T: Real> QueryPass<T> {
    fn new(dims: Dims) -> Self {
        QueryPass {
            grads: Gradients::zeros(dims),
            sl_loss: 0.0,
            entropy: 0.0,
            steps: 0,
            reward: 0.0,
            rollouts: 0,
            return_sum: 0.0,
            return_count: 0,
        }
    }
}

/// One supervised rollout that only walks labelled edges.
fn sl_rollout<T: Real, R: rand::Rng>(
    graph: &KnowledgeGraph,
    hyper: &Hyperparams,
    params: &PolicyParams<T>,
    labels: &LabelSet,
    rng: &mut R,
) -> Result<QueryPass<T>, EnvError> {
    let mut pass = QueryPass::new(params.dims());
    let mut state = EnvState::new(graph, labels.query, hyper.env())?;
    let mut tape = Tape::new(params, labels.query.relation);
    let mut prev = NO_OP;
    let mut dlogits = Vec::new();
    let beta = T::from_f64(hyper.sl.beta);
    while !state.is_done() {
        let Some(label) = labels.label(state.current()) else { break };
        let actions = state.actions();
        let dist = tape.push(params, prev, state.current(), &actions);
        let (_, grad) = label_loss_grad(dist, label, beta);
        pass.sl_loss += label_cross_entropy(&dist.probabilities, label).as_f64();
        pass.entropy += dist.entropy().as_f64();
        pass.steps += 1;
        dlogits.push(grad);

        if hyper.consume_step_on_reject {
            let idx = sample_categorical(&dist.probabilities, rng);
            if state.sl_step(idx, Some(label))? == SlOutcome::Applied {
                prev = actions[idx].relation;
            }
            continue;
        }
        let mut chosen = None;
        for _ in 0..hyper.max_resamples {
            let idx = sample_categorical(&dist.probabilities, rng);
            if label[idx] {
                chosen = Some(idx);
                break;
            }
        }
        let chosen = chosen.or_else(|| {
            (0..label.len()).filter(|&i| label[i]).max_by(|&a, &b| {
                dist.probabilities[a]
                    .partial_cmp(&dist.probabilities[b])
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
        });
        let Some(idx) = chosen else { break };
        state.sl_step(idx, Some(label))?;
        prev = actions[idx].relation;
    }
    if hyper.sl_reduction == StepReduction::Mean && !dlogits.is_empty() {
        let s = T::from_f64(1.0 / dlogits.len() as f64);
        for g in dlogits.iter_mut().flatten() {
            *g *= s;
        }
        pass.sl_loss /= dlogits.len() as f64;
    }
    backward_into(params, &tape, &dlogits, &mut pass.grads);

    let reward = if state.current() == labels.query.target && state.is_done() { 1.0 } else { 0.0 };
    let mut rewards = vec![0.0; hyper.horizon];
    rewards[hyper.horizon - 1] = reward;
    let returns = compute_returns(&rewards, hyper.gamma);
    pass.reward = reward;
    pass.rollouts = 1;
    pass.return_sum = returns.iter().sum();
    pass.return_count = returns.len();
    Ok(pass)
}

/// One sampled rollout; adds its policy-gradient contribution to `pass`.
fn rl_rollout<T: Real, R: rand::Rng>(
    graph: &KnowledgeGraph,
    hyper: &Hyperparams,
    params: &PolicyParams<T>,
    query: &Query,
    baseline: f64,
    rng: &mut R,
    pass: &mut QueryPass<T>,
) -> Result<(), EnvError> {
    let mut state = EnvState::new(graph, *query, hyper.env())?;
    let mut tape = Tape::new(params, query.relation);
    let mut prev = NO_OP;
    let mut chosen = Vec::with_capacity(hyper.horizon);
    let mut rewards = Vec::with_capacity(hyper.horizon);
    while !state.is_done() {
        let actions = state.actions();
        let dist = tape.push(params, prev, state.current(), &actions);
        let idx = sample_categorical(&dist.probabilities, rng);
        pass.entropy += dist.entropy().as_f64();
        rewards.push(state.step(idx)?);
        chosen.push(idx);
        prev = actions[idx].relation;
    }
    let returns = compute_returns(&rewards, hyper.gamma);
    let beta = T::from_f64(hyper.rl.beta);
    let dlogits: Vec<Vec<T>> = tape
        .steps()
        .iter()
        .zip(&chosen)
        .zip(&returns)
        .map(|((s, &a), &g)| policy_gradient_grad(&s.distribution, a, T::from_f64(g - baseline), beta))
        .collect();
    backward_into(params, &tape, &dlogits, &mut pass.grads);
    pass.steps += chosen.len();
    pass.reward += rewards.last().copied().unwrap_or(0.0);
    pass.rollouts += 1;
    pass.return_sum += returns.iter().sum::<f64>();
    pass.return_count += returns.len();
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: PolicyParams<T>,
    pub log: TrainLog,
    /// Parameters at the supervised/RL boundary.
    pub sl_params: PolicyParams<T>,
    /// Baseline and batch counter at the boundary, for resuming.
    pub sl_baseline: f64,
    pub sl_batches: usize,
}

/// Full schedule: `sl_epochs` supervised epochs, then `rl_batches` RL
/// batches. Dev snapshots use `dev` filtered by `known`.
pub fn train<T: Real>(
    graph: &KnowledgeGraph,
    labels: &[LabelSet],
    queries: &[Query],
    dev: &[Query],
    known: &KnownAnswers,
    hyper: &Hyperparams,
) -> Result<TrainOutcome<T>, TrainError> {
    let mut trainer = Trainer::<T>::new(graph, hyper.clone())?;
    trainer.set_dev(dev.to_vec(), known.clone());
    if hyper.sl_epochs > 0 {
        trainer.run_sl(labels)?;
    }
    let sl_params = trainer.params().clone();
    let (sl_baseline, sl_batches) = (trainer.baseline(), trainer.next_batch());
    trainer.run_rl(queries)?;
    let (params, log) = trainer.into_parts();
    Ok(TrainOutcome { params, log, sl_params, sl_baseline, sl_batches })
}

/// One heatmap cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapCell {
    pub sl_epochs: usize,
    pub metric: &'static str,
    pub value: f64,
    pub delta_vs_epoch0: f64,
}

pub const HEATMAP_METRICS: [&str; 6] = ["hits1", "hits3", "hits5", "hits10", "hits20", "mrr"];

fn metric_values(m: &Metrics) -> [f64; 6] {
    let h = |k| m.hits_at(k).unwrap_or(0.0);
    [h(1), h(3), h(5), h(10), h(20), m.mrr]
}

/// Trains once per warm-up length with the same RL budget and reports each
/// metric minus its value at zero supervised epochs.
pub fn sweep<T: Real>(
    graph: &KnowledgeGraph,
    labels: &[LabelSet],
    queries: &[Query],
    eval_queries: &[Query],
    known: &KnownAnswers,
    hyper: &Hyperparams,
    sl_epoch_list: &[usize],
) -> Result<Vec<HeatmapCell>, TrainError> {
    if sl_epoch_list.is_empty() || !sl_epoch_list.contains(&0) {
        return Err(TrainError::Config(String::from("sweep needs a non-empty epoch list containing 0")));
    }
    let mut rows = Vec::with_capacity(sl_epoch_list.len());
    for &epochs in sl_epoch_list {
        let h = Hyperparams { sl_epochs: epochs, ..hyper.clone() };
        let out = train::<T>(graph, labels, queries, &[], known, &h)?;
        let report = eval::evaluate(graph, &out.params, eval_queries, known, &h.eval_config())?;
        rows.push((epochs, metric_values(&report.metrics)));
    }
    let zero = rows.iter().find(|(e, _)| *e == 0).map(|(_, v)| *v).unwrap();
    let mut cells = Vec::new();
    for (epochs, values) in rows {
        for (i, name) in HEATMAP_METRICS.iter().enumerate() {
            cells.push(HeatmapCell {
                sl_epochs: epochs,
                metric: name,
                value: values[i],
                delta_vs_epoch0: values[i] - zero[i],
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_table() {
        let fb = preset("fb15k-237").unwrap();
        assert_eq!((fb.sl.beta, fb.rl.beta, fb.sl.lambda, fb.rl.lambda), (0.0002, 0.02, 0.02, 0.02));
        let nell = preset("NELL-995").unwrap();
        assert_eq!((nell.sl.beta, nell.rl.beta), (0.02, 0.05));
        let wn = preset("wn18rr").unwrap();
        assert_eq!((wn.sl.lambda, wn.rl.lambda), (0.002, 0.05));
        assert_eq!(preset("fb60k").unwrap().rl.beta, 0.2);
        assert_eq!(Hyperparams::default().learning_rate, 1e-3);
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let h = Hyperparams { gamma: 1.5, ..Hyperparams::default() };
        assert!(matches!(h.validate(), Err(TrainError::Config(_))));
        let h = Hyperparams { rl: StageParams { beta: -1.0, lambda: 0.5 }, ..Hyperparams::default() };
        assert!(h.validate().is_err());
        assert!(Hyperparams::default().validate().is_ok());
    }

    #[test]
    fn baseline_with_unit_decay_never_moves() {
        let g = KnowledgeGraph::ingest("a\tr\tb\n", None, 8).unwrap();
        let h = Hyperparams { dims: ModelDims { embed: 2, hidden: 2, ff: 2 }, ..Hyperparams::default() };
        let mut t = Trainer::<f64>::new(&g, h).unwrap();
        t.resume(0, 0.25);
        t.update_baseline(1.0, 0.9);
        assert_eq!(t.baseline(), 0.25);
        t.update_baseline(0.5, 0.75);
        assert_eq!(t.baseline(), 0.5);
    }
}
