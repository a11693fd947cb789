//! Beam-search decoding, answer ranking and ranking metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::kg::{Action, EntityId, KnowledgeGraph, MaskPolicy, Query, RelationId, Triple, Vocabularies, NO_OP};
use crate::policy::{lstm_step, score_actions, HistoryState, PolicyParams};
use crate::real::Real;

/// Cut-offs reported for Hits@k.
pub const HITS_KS: [usize; 5] = [1, 3, 5, 10, 20];

#[derive(Clone, Debug, PartialEq)]
pub struct BeamEntry {
    pub path: Vec<Action>,
    /// Sum of per-step log-probabilities.
    pub log_prob: f64,
}

impl BeamEntry {
    pub fn terminal(&self, source: EntityId) -> EntityId {
        self.path.last().map_or(source, |a| a.entity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamConfig {
    pub width: usize,
    pub horizon: usize,
    pub mask: MaskPolicy,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { width: 100, horizon: 3, mask: MaskPolicy::QueryEdge }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    /// Best-first.
    pub beams: Vec<BeamEntry>,
    /// Distinct full-length action sequences scored at the last step.
    pub unique_paths: usize,
}

/// Descending score, then ascending path.
fn beam_order(a: (f64, &[Action], Option<&Action>), b: (f64, &[Action], Option<&Action>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.iter().chain(a.2).cmp(b.1.iter().chain(b.2)))
}

struct Live<T> {
    path: Vec<Action>,
    log_prob: f64,
    history: HistoryState<T>,
    entity: EntityId,
    prev_relation: RelationId,
}

/// Width-limited search over action sequences of exactly `horizon` steps.
pub fn beam_search_with<T: Real>(
    graph: &KnowledgeGraph,
    params: &PolicyParams<T>,
    query: &Query,
    config: &BeamConfig,
) -> BeamOutput {
    let width = config.width.max(1);
    let view = graph.query_view(query, config.mask);
    let mut live = vec![Live {
        path: Vec::new(),
        log_prob: 0.0,
        history: HistoryState::zero(params.dims().hidden),
        entity: query.source,
        prev_relation: NO_OP,
    }];
    let mut unique_paths = 0;
    for _ in 0..config.horizon {
        let mut histories = Vec::with_capacity(live.len());
        let mut candidates: Vec<(f64, usize, Action)> = Vec::new();
        for (bi, b) in live.iter().enumerate() {
            let h = lstm_step(params, &b.history, b.prev_relation, b.entity);
            let actions = view.actions(b.entity);
            let dist = score_actions(params, &h, query.relation, &actions);
            for (a, lp) in actions.iter().zip(&dist.log_probabilities) {
                candidates.push((b.log_prob + lp.as_f64(), bi, *a));
            }
            histories.push(h);
        }
        unique_paths = candidates.len();
        candidates.sort_by(|x, y| {
            beam_order((x.0, &live[x.1].path, Some(&x.2)), (y.0, &live[y.1].path, Some(&y.2)))
        });
        candidates.truncate(width);
        live = candidates
            .into_iter()
            .map(|(lp, bi, a)| {
                let mut path = live[bi].path.clone();
                path.push(a);
                Live {
                    path,
                    log_prob: lp,
                    history: histories[bi].clone(),
                    entity: a.entity,
                    prev_relation: a.relation,
                }
            })
            .collect();
    }
    BeamOutput {
        beams: live.into_iter().map(|b| BeamEntry { path: b.path, log_prob: b.log_prob }).collect(),
        unique_paths,
    }
}

pub fn beam_search<T: Real>(
    graph: &KnowledgeGraph,
    params: &PolicyParams<T>,
    query: &Query,
    horizon: usize,
    width: usize,
) -> Vec<BeamEntry> {
    let cfg = BeamConfig { width, horizon, mask: MaskPolicy::QueryEdge };
    beam_search_with(graph, params, query, &cfg).beams
}

/// 1-based rank of the true answer, `None` when no beam reached it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rank(pub Option<u32>);

impl Rank {
    pub const UNREACHED: Rank = Rank(None);

    pub fn reciprocal(self) -> f64 {
        self.0.map_or(0.0, |r| 1.0 / r as f64)
    }

    pub fn within(self, k: usize) -> bool {
        self.0.is_some_and(|r| r as usize <= k)
    }
}

/// Terminal entities with their best score, best-first, ties by id.
pub fn candidate_scores(beams: &[BeamEntry], source: EntityId) -> Vec<(EntityId, f64)> {
    let mut best: BTreeMap<EntityId, f64> = BTreeMap::new();
    for b in beams {
        let e = b.terminal(source);
        let slot = best.entry(e).or_insert(f64::NEG_INFINITY);
        if b.log_prob > *slot {
            *slot = b.log_prob;
        }
    }
    let mut out: Vec<(EntityId, f64)> = best.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Rank of `query.target` among the beam terminals. With `filtered`, other
/// members of `known_answers` are dropped before counting.
pub fn rank_answers(
    beams: &[BeamEntry],
    query: &Query,
    known_answers: &[EntityId],
    filtered: bool,
) -> Rank {
    let mut pos = 0u32;
    for (e, _) in candidate_scores(beams, query.source) {
        if e == query.target {
            return Rank(Some(pos + 1));
        }
        if filtered && known_answers.contains(&e) {
            continue;
        }
        pos += 1;
    }
    Rank::UNREACHED
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("metrics are undefined for an empty rank list")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// `(k, Hits@k)` for every k in [`HITS_KS`].
    pub hits: Vec<(usize, f64)>,
    pub mrr: f64,
    pub count: usize,
}

impl Metrics {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

pub fn hits_at_k(ranks: &[Rank], k: usize) -> f64 {
    ranks.iter().filter(|r| r.within(k)).count() as f64 / ranks.len() as f64
}

pub fn mean_reciprocal_rank(ranks: &[Rank]) -> f64 {
    ranks.iter().map(|r| r.reciprocal()).sum::<f64>() / ranks.len() as f64
}

pub fn metrics(ranks: &[Rank]) -> Result<Metrics, MetricsError> {
    if ranks.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(Metrics {
        hits: HITS_KS.iter().map(|&k| (k, hits_at_k(ranks, k))).collect(),
        mrr: mean_reciprocal_rank(ranks),
        count: ranks.len(),
    })
}

/// All known `(source, relation) -> answers` pairs, used for filtering.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnownAnswers {
    index: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl KnownAnswers {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut index: BTreeMap<(EntityId, RelationId), Vec<EntityId>> = BTreeMap::new();
        for t in triples {
            index.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        for v in index.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        KnownAnswers { index }
    }

    pub fn get(&self, source: EntityId, relation: RelationId) -> &[EntityId] {
        self.index.get(&(source, relation)).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub beam: BeamConfig,
    pub filtered: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { beam: BeamConfig::default(), filtered: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub query: Query,
    pub rank: Rank,
    /// Best-first candidate entities with scores.
    pub candidates: Vec<(EntityId, f64)>,
    pub unique_paths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionMetrics {
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelationRow {
    pub queries: usize,
    pub hits: usize,
    pub misses: usize,
    pub mrr: f64,
}

impl RelationRow {
    pub fn success_rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.hits as f64 / self.queries as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitReport {
    /// Queries with more than one answer; `None` when there are none.
    pub to_many: Option<PartitionMetrics>,
    pub to_one: Option<PartitionMetrics>,
    /// Per query relation; a hit means rank 1.
    pub per_relation: BTreeMap<RelationId, RelationRow>,
    /// Training facts per base relation.
    pub relation_frequency: BTreeMap<RelationId, usize>,
}

/// Number of answers of a query: training answers plus its own target.
pub fn answer_count(graph: &KnowledgeGraph, query: &Query) -> usize {
    let train = graph.answers(query.source, query.relation);
    train.len() + usize::from(!train.contains(&query.target))
}

fn partition(ranks: &[Rank]) -> Option<PartitionMetrics> {
    (!ranks.is_empty()).then(|| PartitionMetrics {
        count: ranks.len(),
        mrr: mean_reciprocal_rank(ranks),
        hits1: hits_at_k(ranks, 1),
    })
}

pub fn split_report(queries: &[Query], graph: &KnowledgeGraph, ranks: &[Rank]) -> SplitReport {
    assert_eq!(queries.len(), ranks.len(), "ranks aligned with queries");
    let (mut many, mut one) = (Vec::new(), Vec::new());
    let mut per_relation: BTreeMap<RelationId, (RelationRow, Vec<Rank>)> = BTreeMap::new();
    for (q, &r) in queries.iter().zip(ranks) {
        if answer_count(graph, q) > 1 {
            many.push(r);
        } else {
            one.push(r);
        }
        let (row, rs) = per_relation.entry(q.relation).or_default();
        row.queries += 1;
        if r.within(1) {
            row.hits += 1;
        } else {
            row.misses += 1;
        }
        rs.push(r);
    }
    let mut relation_frequency = BTreeMap::new();
    for t in graph.triples() {
        *relation_frequency.entry(t.relation).or_insert(0) += 1;
    }
    SplitReport {
        to_many: partition(&many),
        to_one: partition(&one),
        per_relation: per_relation
            .into_iter()
            .map(|(rel, (mut row, rs))| {
                row.mrr = mean_reciprocal_rank(&rs);
                (rel, row)
            })
            .collect(),
        relation_frequency,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub results: Vec<QueryResult>,
    pub metrics: Metrics,
    pub split: SplitReport,
    /// Mean unique paths for queries whose answer was found / missed.
    pub unique_paths_found: Option<f64>,
    pub unique_paths_missed: Option<f64>,
}

fn evaluate_one<T: Real>(
    graph: &KnowledgeGraph,
    params: &PolicyParams<T>,
    query: &Query,
    known: &KnownAnswers,
    config: &EvalConfig,
) -> QueryResult {
    let out = beam_search_with(graph, params, query, &config.beam);
    let rank = rank_answers(&out.beams, query, known.get(query.source, query.relation), config.filtered);
    QueryResult {
        query: *query,
        rank,
        candidates: candidate_scores(&out.beams, query.source),
        unique_paths: out.unique_paths,
    }
}

/// Beam-decodes every query and aggregates the ranks. Results are in query
/// order regardless of threading.
pub fn evaluate<T: Real>(
    graph: &KnowledgeGraph,
    params: &PolicyParams<T>,
    queries: &[Query],
    known: &KnownAnswers,
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    #[cfg(feature = "parallel")]
    let results: Vec<QueryResult> =
        queries.par_iter().map(|q| evaluate_one(graph, params, q, known, config)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<QueryResult> =
        queries.iter().map(|q| evaluate_one(graph, params, q, known, config)).collect();

    let ranks: Vec<Rank> = results.iter().map(|r| r.rank).collect();
    let metrics = metrics(&ranks)?;
    let split = split_report(queries, graph, &ranks);
    let mean = |found: bool| {
        let xs: Vec<usize> = results
            .iter()
            .filter(|r| r.rank.0.is_some() == found)
            .map(|r| r.unique_paths)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<usize>() as f64 / xs.len() as f64)
    };
    Ok(EvalReport {
        unique_paths_found: mean(true),
        unique_paths_missed: mean(false),
        results,
        metrics,
        split,
    })
}

/// Renders the best `top_n` beams as `a —r→ b … [exact]` lines. A path is
/// exact when it ends on one of `answers`.
pub fn decode_paths(
    beams: &[BeamEntry],
    vocab: &Vocabularies,
    source: EntityId,
    answers: &[EntityId],
    top_n: usize,
) -> Vec<String> {
    beams
        .iter()
        .take(top_n)
        .map(|b| {
            let mut line = String::from(vocab.entity_name(source));
            for a in &b.path {
                line.push_str(&format!(" —{}→ {}", vocab.relation_name(a.relation), vocab.entity_name(a.entity)));
            }
            let tag = if answers.contains(&b.terminal(source)) { "exact" } else { "incorrect" };
            line.push_str(&format!(" [{tag}]"));
            line
        })
        .collect()
}

/// Distinct terminal entities among `beams`.
pub fn distinct_terminals(beams: &[BeamEntry], source: EntityId) -> BTreeSet<EntityId> {
    beams.iter().map(|b| b.terminal(source)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beam(path: &[(u32, u32)], lp: f64) -> BeamEntry {
        BeamEntry {
            path: path.iter().map(|&(r, e)| Action::new(RelationId(r), EntityId(e))).collect(),
            log_prob: lp,
        }
    }

    #[test]
    fn metric_fixtures() {
        let m = metrics(&[Rank(Some(1))]).unwrap();
        assert_eq!((m.hits_at(1), m.mrr), (Some(1.0), 1.0));
        let m = metrics(&[Rank(Some(1)), Rank(Some(3)), Rank(Some(12))]).unwrap();
        assert_eq!(m.hits_at(3), Some(2.0 / 3.0));
        assert_eq!(m.hits_at(10), Some(2.0 / 3.0));
        assert!((m.mrr - (1.0 + 1.0 / 3.0 + 1.0 / 12.0) / 3.0).abs() < 1e-12);
        let m = metrics(&[Rank::UNREACHED, Rank::UNREACHED]).unwrap();
        assert!(m.hits.iter().all(|(_, v)| *v == 0.0) && m.mrr == 0.0);
        assert_eq!(metrics(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn ranking_with_and_without_filter() {
        let (x, q, y) = (EntityId(1), EntityId(2), EntityId(3));
        let beams = [beam(&[(1, 1)], -0.1), beam(&[(1, 2)], -0.5), beam(&[(1, 3)], -0.9)];
        let query = Query::new(EntityId(0), RelationId(1), q);
        assert_eq!(rank_answers(&beams, &query, &[x, q], true), Rank(Some(1)));
        assert_eq!(rank_answers(&beams, &query, &[x, q], false), Rank(Some(2)));
        let top = Query::new(EntityId(0), RelationId(1), x);
        assert_eq!(rank_answers(&beams, &top, &[], true), Rank(Some(1)));
        let miss = Query::new(EntityId(0), RelationId(1), EntityId(9));
        assert_eq!(rank_answers(&beams, &miss, &[], true), Rank::UNREACHED);
        let _ = y;
    }

    #[test]
    fn dedup_keeps_best_score_and_breaks_ties_by_id() {
        let beams = [
            beam(&[(1, 5)], -2.0),
            beam(&[(2, 5)], -0.3),
            beam(&[(1, 4)], -0.3),
            beam(&[(0, 0)], -1.0),
        ];
        let c = candidate_scores(&beams, EntityId(0));
        assert_eq!(c, vec![(EntityId(4), -0.3), (EntityId(5), -0.3), (EntityId(0), -1.0)]);
    }

    #[test]
    fn decode_fixture() {
        let mut v = Vocabularies::new();
        v.parse_triples("a\tr\tb").unwrap();
        let q = Query::new(EntityId(0), RelationId(1), EntityId(1));
        let b = beam(&[(1, 1), (0, 1), (0, 1)], -0.2);
        assert_eq!(decode_paths(&[b.clone()], &v, q.source, &[q.target], 5), vec!["a —r→ b —NO_OP→ b —NO_OP→ b [exact]"]);
        assert!(decode_paths(&[], &v, q.source, &[q.target], 5).is_empty());
        let wrong = beam(&[(2, 0)], -0.5);
        let lines = decode_paths(&[b, wrong], &v, q.source, &[q.target], 10);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "a —r_inv→ a [incorrect]");
    }
}
