//! Supervised action labels for the warm-up stage.
//!
//! An action of node `u` is labelled 1 when it is the self-loop and `u` is
//! one of the query's answers, or when the edge lies on some simple path of
//! at most `depth` hops from the source to any answer, in the graph with the
//! query edge hidden. [`oracle_correct_edges`] states that rule by brute
//! force; [`generate_labels`] computes the same set with a bounded
//! breadth-first sweep followed by a pruned depth-first backfill.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::kg::{Action, EntityId, KnowledgeGraph, MaskPolicy, MaskedView, Query, RelationId, NO_OP};

/// A directed edge `u -(relation)-> v` written as `(u, action)`.
pub type Edge = (EntityId, Action);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelConfig {
    /// Maximum path length searched.
    pub depth: usize,
    pub mask: MaskPolicy,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { depth: 3, mask: MaskPolicy::QueryEdge }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("unlabelable query: no answers for (source, relation)")]
    NoAnswers,
    #[error("unlabelable query: no answer reachable within {depth} hops")]
    Unreachable { depth: usize },
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error(transparent)]
    Graph(#[from] crate::kg::KgError),
}

/// Labels of one query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    pub query: Query,
    /// Answers of `(source, relation, ?)`, ascending.
    pub e_all: Vec<EntityId>,
    /// Interior nodes of correct paths (heads of correct edges other than
    /// the source), ascending.
    pub correct_nodes: Vec<EntityId>,
    /// Per-node labels aligned with the node's masked action list.
    pub labels: BTreeMap<EntityId, Vec<bool>>,
    pub depth: usize,
}

impl LabelSet {
    pub fn label(&self, entity: EntityId) -> Option<&[bool]> {
        self.labels.get(&entity).map(Vec::as_slice)
    }

    pub fn is_answer(&self, entity: EntityId) -> bool {
        self.e_all.binary_search(&entity).is_ok()
    }
}

/// `{ e : (source, relation, e) is a base triple }`.
pub fn compute_e_all(graph: &KnowledgeGraph, source: EntityId, relation: RelationId) -> Vec<EntityId> {
    graph.answers(source, relation).to_vec()
}

/// Every non-self-loop edge on a simple path of length `<= depth` from
/// `source` to a member of `e_all`, by exhaustive enumeration.
pub fn oracle_correct_edges(
    view: &MaskedView<'_>,
    source: EntityId,
    e_all: &[EntityId],
    depth: usize,
) -> BTreeSet<Edge> {
    fn walk(
        view: &MaskedView<'_>,
        targets: &BTreeSet<EntityId>,
        depth: usize,
        path: &mut Vec<Edge>,
        on_path: &mut Vec<EntityId>,
        out: &mut BTreeSet<Edge>,
    ) {
        let u = *on_path.last().expect("path has a root");
        if !path.is_empty() && targets.contains(&u) {
            out.extend(path.iter().copied());
        }
        if path.len() == depth {
            return;
        }
        for a in view.actions(u).iter() {
            if a.relation == NO_OP || on_path.contains(&a.entity) {
                continue;
            }
            path.push((u, *a));
            on_path.push(a.entity);
            walk(view, targets, depth, path, on_path, out);
            on_path.pop();
            path.pop();
        }
    }

    let targets: BTreeSet<EntityId> = e_all.iter().copied().collect();
    let mut out = BTreeSet::new();
    if depth > 0 {
        walk(view, &targets, depth, &mut Vec::new(), &mut vec![source], &mut out);
    }
    out
}

/// Same edge set as [`oracle_correct_edges`], computed by
///
/// 1. a breadth-first sweep from the source that records every node within
///    `depth` hops (the visited memory) together with the reverse edges
///    between them,
/// 2. a reverse breadth-first sweep from the answers giving each node's
///    distance-to-answer, and
/// 3. a depth-first backfill over simple paths that only enters `v` at hop
///    `k` when `k + dist_to_answer(v) <= depth`, marking an edge whenever the
///    subtree below it reaches an answer.
pub fn correct_edges(
    view: &MaskedView<'_>,
    source: EntityId,
    e_all: &[EntityId],
    depth: usize,
) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    if depth == 0 || e_all.is_empty() {
        return out;
    }

    // Phase 1: forward ball with reverse adjacency.
    let mut from_source: BTreeMap<EntityId, usize> = BTreeMap::new();
    let mut reverse: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    from_source.insert(source, 0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = from_source[&u];
        if d == depth {
            continue;
        }
        for a in view.actions(u).iter().filter(|a| a.relation != NO_OP) {
            reverse.entry(a.entity).or_default().push(u);
            if !from_source.contains_key(&a.entity) {
                from_source.insert(a.entity, d + 1);
                queue.push_back(a.entity);
            }
        }
    }

    // Phase 2: distance to the nearest answer inside the ball.
    let mut to_answer: BTreeMap<EntityId, usize> = BTreeMap::new();
    for &t in e_all {
        if from_source.contains_key(&t) {
            to_answer.insert(t, 0);
            queue.push_back(t);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = to_answer[&v];
        if let Some(parents) = reverse.get(&v) {
            for &u in parents {
                if !to_answer.contains_key(&u) {
                    to_answer.insert(u, d + 1);
                    queue.push_back(u);
                }
            }
        }
    }
    if !to_answer.contains_key(&source) {
        return out;
    }

    // Phase 3: pruned simple-path backfill.
    struct Search<'a, 'g> {
        view: &'a MaskedView<'g>,
        targets: &'a [EntityId],
        to_answer: &'a BTreeMap<EntityId, usize>,
        depth: usize,
        on_path: Vec<EntityId>,
        out: &'a mut BTreeSet<Edge>,
    }

    impl Search<'_, '_> {
        // Returns whether some extension of the current path ends at an answer.
        fn visit(&mut self, u: EntityId, hops: usize) -> bool {
            let mut reached = false;
            for a in self.view.actions(u).iter() {
                if a.relation == NO_OP || self.on_path.contains(&a.entity) {
                    continue;
                }
                match self.to_answer.get(&a.entity) {
                    Some(&d) if hops + 1 + d <= self.depth => {}
                    _ => continue,
                }
                let mut hit = self.targets.binary_search(&a.entity).is_ok();
                if hops + 1 < self.depth {
                    self.on_path.push(a.entity);
                    hit |= self.visit(a.entity, hops + 1);
                    self.on_path.pop();
                }
                if hit {
                    self.out.insert((u, *a));
                    reached = true;
                }
            }
            reached
        }
    }

    let mut sorted = e_all.to_vec();
    sorted.sort_unstable();
    let mut search = Search {
        view,
        targets: &sorted,
        to_answer: &to_answer,
        depth,
        on_path: vec![source],
        out: &mut out,
    };
    search.visit(source, 0);
    out
}

/// Assembles a [`LabelSet`] from a correct-edge set.
pub fn labels_from_edges(
    view: &MaskedView<'_>,
    query: Query,
    e_all: &[EntityId],
    edges: &BTreeSet<Edge>,
    depth: usize,
) -> LabelSet {
    let mut e_all = e_all.to_vec();
    e_all.sort_unstable();
    e_all.dedup();

    let mut nodes: BTreeSet<EntityId> = e_all.iter().copied().collect();
    nodes.insert(query.source);
    let mut correct_nodes = BTreeSet::new();
    for (u, a) in edges {
        nodes.insert(*u);
        nodes.insert(a.entity);
        if *u != query.source {
            correct_nodes.insert(*u);
        }
    }

    let labels = nodes
        .into_iter()
        .map(|u| {
            let is_answer = e_all.binary_search(&u).is_ok();
            let label = view
                .actions(u)
                .iter()
                .enumerate()
                .map(|(i, a)| if i == 0 { is_answer } else { edges.contains(&(u, *a)) })
                .collect();
            (u, label)
        })
        .collect();

    LabelSet {
        query,
        e_all,
        correct_nodes: correct_nodes.into_iter().collect(),
        labels,
        depth,
    }
}

/// Labels for one query under `config`.
pub fn generate_labels(
    graph: &KnowledgeGraph,
    query: &Query,
    config: &LabelConfig,
) -> Result<LabelSet, LabelError> {
    if config.depth == 0 {
        return Err(LabelError::ZeroDepth);
    }
    graph.check_query(query)?;
    let e_all = compute_e_all(graph, query.source, query.relation);
    if e_all.is_empty() {
        return Err(LabelError::NoAnswers);
    }
    let view = graph.query_view(query, config.mask);
    let edges = correct_edges(&view, query.source, &e_all, config.depth);
    if edges.is_empty() && e_all.binary_search(&query.source).is_err() {
        return Err(LabelError::Unreachable { depth: config.depth });
    }
    Ok(labels_from_edges(&view, *query, &e_all, &edges, config.depth))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoverageCount {
    pub labeled: usize,
    pub total: usize,
}

impl CoverageCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.labeled as f64 / self.total as f64
        }
    }
}

/// Share of training queries that own a label set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoverageReport {
    pub overall: CoverageCount,
    pub per_relation: BTreeMap<RelationId, CoverageCount>,
}

pub fn label_coverage<'a>(
    cache: impl IntoIterator<Item = &'a LabelSet>,
    queries: &[Query],
) -> CoverageReport {
    let have: BTreeSet<Query> = cache.into_iter().map(|l| l.query).collect();
    let mut report = CoverageReport::default();
    for q in queries {
        let hit = have.contains(q) as usize;
        report.overall.total += 1;
        report.overall.labeled += hit;
        let row = report.per_relation.entry(q.relation).or_default();
        row.total += 1;
        row.labeled += hit;
    }
    report
}
