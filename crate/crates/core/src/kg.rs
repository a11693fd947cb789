//! Triple store with inverse-augmented, truncated adjacency.
//!
//! Relation ids are laid out as `0` for [`NO_OP`], `1..=R` for the base
//! relations in first-appearance order and `R+1..=2R` for their inverses,
//! so `inverse(r) = r + R`. Every action list starts with the self-loop and
//! is otherwise sorted by `(relation, entity)`.

use alloc::borrow::Cow;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Dense entity index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense relation index in the augmented relation space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

/// The self-loop relation.
pub const NO_OP: RelationId = RelationId(0);

/// Name reserved for the self-loop relation.
pub const NO_OP_NAME: &str = "NO_OP";

/// Suffix used when rendering inverse relations.
pub const INVERSE_SUFFIX: &str = "_inv";

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// One outgoing edge `(relation, entity)`. Ordering is lexicographic in
/// that field order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub relation: RelationId,
    pub entity: EntityId,
}

impl Action {
    pub const fn new(relation: RelationId, entity: EntityId) -> Self {
        Action { relation, entity }
    }

    pub fn self_loop(entity: EntityId) -> Self {
        Action { relation: NO_OP, entity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

/// A query `(e_s, r_q, e_q)`. The target is never shown to the agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Query {
    pub source: EntityId,
    pub relation: RelationId,
    pub target: EntityId,
}

impl Query {
    pub const fn new(source: EntityId, relation: RelationId, target: EntityId) -> Self {
        Query { source, relation, target }
    }
}

impl From<Triple> for Query {
    fn from(t: Triple) -> Self {
        Query::new(t.head, t.relation, t.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KgError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    Parse { line: usize, found: usize },
    #[error("line {line}: unknown {kind} `{name}` in frozen vocabulary")]
    UnknownName { line: usize, kind: &'static str, name: String },
    #[error("relation name `{0}` is reserved")]
    ReservedName(String),
    #[error("duplicate vocabulary name `{0}`")]
    DuplicateName(String),
    #[error("vocabulary ids must be dense 0..n, got id {id} for `{name}`")]
    SparseId { name: String, id: u32 },
    #[error("entity {0} is out of range")]
    InvalidEntity(EntityId),
    #[error("relation {0} is out of range")]
    InvalidRelation(RelationId),
    #[error("max_actions must be at least 1")]
    ZeroMaxActions,
}

/// Bidirectional name <-> id map with ids assigned in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
    frozen: bool,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from `(name, id)` pairs; ids must cover `0..n`.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let mut slots: Vec<Option<String>> = Vec::new();
        for (name, id) in pairs {
            let name = name.into();
            let idx = id as usize;
            if slots.len() <= idx {
                slots.resize(idx + 1, None);
            }
            if slots[idx].is_some() {
                return Err(KgError::SparseId { name, id });
            }
            slots[idx] = Some(name);
        }
        let mut vocab = Vocab::new();
        for (id, slot) in slots.into_iter().enumerate() {
            let name = slot.ok_or_else(|| KgError::SparseId {
                name: String::new(),
                id: id as u32,
            })?;
            if vocab.index.contains_key(&name) {
                return Err(KgError::DuplicateName(name));
            }
            vocab.push(name);
        }
        Ok(vocab)
    }

    fn push(&mut self, name: String) -> u32 {
        let id = self.names.len() as u32;
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Names in id order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    fn resolve(&mut self, name: &str) -> Option<u32> {
        match self.index.get(name) {
            Some(&id) => Some(id),
            None if self.frozen => None,
            None => Some(self.push(name.to_string())),
        }
    }
}

/// Entity vocabulary plus relation vocabulary. The relation vocabulary
/// holds `NO_OP` at id 0 followed by base relations; inverses are implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabularies {
    pub entities: Vocab,
    pub relations: Vocab,
}

impl Default for Vocabularies {
    fn default() -> Self {
        let mut relations = Vocab::new();
        relations.push(NO_OP_NAME.to_string());
        Vocabularies { entities: Vocab::new(), relations }
    }
}

impl Vocabularies {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from explicit vocab tables. The relation table must not contain
    /// `NO_OP`; base relations are shifted by one to make room for it.
    pub fn from_tables(entities: Vocab, base_relations: &Vocab) -> Result<Self, KgError> {
        let mut v = Vocabularies { entities, relations: Vocab::new() };
        v.relations.push(NO_OP_NAME.to_string());
        for name in base_relations.names() {
            if name == NO_OP_NAME {
                return Err(KgError::ReservedName(name.to_string()));
            }
            v.relations.push(name.to_string());
        }
        Ok(v)
    }

    pub fn freeze(&mut self) {
        self.entities.freeze();
        self.relations.freeze();
    }

    pub fn base_relation_count(&self) -> usize {
        self.relations.len() - 1
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.id(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        match name {
            NO_OP_NAME => Some(NO_OP),
            _ => self.relations.id(name).map(RelationId),
        }
    }

    /// Renders any augmented relation id, inverses with [`INVERSE_SUFFIX`].
    pub fn relation_name(&self, r: RelationId) -> String {
        let base = self.base_relation_count() as u32;
        if r.0 <= base {
            self.relations.name(r.0).unwrap_or("?").to_string()
        } else {
            let b = self.relations.name(r.0 - base).unwrap_or("?");
            format!("{b}{INVERSE_SUFFIX}")
        }
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0).unwrap_or("?")
    }

    /// Parses `head<TAB>relation<TAB>tail` lines, growing the vocabularies
    /// unless they are frozen. Blank lines are skipped.
    pub fn parse_triples(&mut self, text: &str) -> Result<Vec<Triple>, KgError> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse { line: line_no, found: fields.len() });
            }
            if fields[1] == NO_OP_NAME {
                return Err(KgError::ReservedName(fields[1].to_string()));
            }
            let unknown = |kind, name: &str| KgError::UnknownName {
                line: line_no,
                kind,
                name: name.to_string(),
            };
            let head = self.entities.resolve(fields[0]).ok_or_else(|| unknown("entity", fields[0]))?;
            let rel = self.relations.resolve(fields[1]).ok_or_else(|| unknown("relation", fields[1]))?;
            let tail = self.entities.resolve(fields[2]).ok_or_else(|| unknown("entity", fields[2]))?;
            out.push(Triple::new(EntityId(head), RelationId(rel), EntityId(tail)));
        }
        Ok(out)
    }
}

/// Default truncation bound for action lists.
pub const DEFAULT_MAX_ACTIONS: usize = 256;

/// Immutable knowledge graph with augmented adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    vocab: Vocabularies,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<Action>>,
    answers: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    max_actions: usize,
}

impl KnowledgeGraph {
    /// Builds the graph over `vocab` from base triples. Duplicate triples are
    /// collapsed. Each action list is `NO_OP` followed by the smallest
    /// `max_actions - 1` remaining edges.
    pub fn from_triples(
        vocab: Vocabularies,
        triples: impl IntoIterator<Item = Triple>,
        max_actions: usize,
    ) -> Result<Self, KgError> {
        if max_actions == 0 {
            return Err(KgError::ZeroMaxActions);
        }
        let n_ent = vocab.entities.len();
        let n_base = vocab.base_relation_count() as u32;
        let mut triples: Vec<Triple> = triples.into_iter().collect();
        for t in &triples {
            if t.head.index() >= n_ent {
                return Err(KgError::InvalidEntity(t.head));
            }
            if t.tail.index() >= n_ent {
                return Err(KgError::InvalidEntity(t.tail));
            }
            if t.relation == NO_OP || t.relation.0 > n_base {
                return Err(KgError::InvalidRelation(t.relation));
            }
        }
        triples.sort_unstable();
        triples.dedup();

        let mut full: Vec<Vec<Action>> = vec![Vec::new(); n_ent];
        let mut answers: BTreeMap<(EntityId, RelationId), Vec<EntityId>> = BTreeMap::new();
        for t in &triples {
            full[t.head.index()].push(Action::new(t.relation, t.tail));
            full[t.tail.index()].push(Action::new(RelationId(t.relation.0 + n_base), t.head));
            answers.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        let adjacency = full
            .into_iter()
            .enumerate()
            .map(|(e, mut edges)| {
                edges.sort_unstable();
                edges.dedup();
                let mut list = Vec::with_capacity(edges.len().min(max_actions - 1) + 1);
                list.push(Action::self_loop(EntityId(e as u32)));
                list.extend(edges.into_iter().take(max_actions - 1));
                list
            })
            .collect();
        Ok(KnowledgeGraph { vocab, triples, adjacency, answers, max_actions })
    }

    /// Parses triple text and builds the graph. With `existing` the given
    /// vocabularies are used (and, if frozen, unknown names are rejected).
    pub fn ingest(
        text: &str,
        existing: Option<Vocabularies>,
        max_actions: usize,
    ) -> Result<Self, KgError> {
        let mut vocab = existing.unwrap_or_default();
        let triples = vocab.parse_triples(text)?;
        KnowledgeGraph::from_triples(vocab, triples, max_actions)
    }

    pub fn vocab(&self) -> &Vocabularies {
        &self.vocab
    }

    pub fn entity_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn base_relation_count(&self) -> usize {
        self.vocab.base_relation_count()
    }

    /// `NO_OP`, base and inverse relations.
    pub fn relation_count(&self) -> usize {
        2 * self.base_relation_count() + 1
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions
    }

    /// Base triples, sorted and deduplicated.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn inverse(&self, r: RelationId) -> RelationId {
        let n = self.base_relation_count() as u32;
        if r == NO_OP {
            NO_OP
        } else if r.0 <= n {
            RelationId(r.0 + n)
        } else {
            RelationId(r.0 - n)
        }
    }

    pub fn is_base_relation(&self, r: RelationId) -> bool {
        r != NO_OP && r.index() <= self.base_relation_count()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    /// Tails of `(source, relation, ?)` among the base triples, ascending.
    pub fn answers(&self, source: EntityId, relation: RelationId) -> &[EntityId] {
        self.answers.get(&(source, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Truncated action list of `entity`.
    pub fn action_space(&self, entity: EntityId) -> Result<&[Action], KgError> {
        self.adjacency
            .get(entity.index())
            .map(Vec::as_slice)
            .ok_or(KgError::InvalidEntity(entity))
    }

    pub(crate) fn actions_unchecked(&self, entity: EntityId) -> &[Action] {
        &self.adjacency[entity.index()]
    }

    pub fn check_query(&self, q: &Query) -> Result<(), KgError> {
        for e in [q.source, q.target] {
            if e.index() >= self.entity_count() {
                return Err(KgError::InvalidEntity(e));
            }
        }
        if !self.is_base_relation(q.relation) {
            return Err(KgError::InvalidRelation(q.relation));
        }
        Ok(())
    }

    /// View with nothing hidden.
    pub fn view(&self) -> MaskedView<'_> {
        MaskedView { graph: self, hidden: Vec::new(), missing: false }
    }

    /// View hiding `(head, relation, tail)` and its inverse.
    pub fn mask_edge(&self, head: EntityId, relation: RelationId, tail: EntityId) -> MaskedView<'_> {
        self.view().hide(head, relation, tail)
    }

    /// View used for rollouts and labelling of `query`.
    pub fn query_view(&self, query: &Query, policy: MaskPolicy) -> MaskedView<'_> {
        match policy {
            MaskPolicy::QueryEdge => self.mask_edge(query.source, query.relation, query.target),
            MaskPolicy::AllAnswers => {
                let mut view = self.view();
                for &tail in self.answers(query.source, query.relation) {
                    view = view.hide(query.source, query.relation, tail);
                }
                if !self.contains(&Triple::new(query.source, query.relation, query.target)) {
                    view.missing = true;
                }
                view
            }
        }
    }
}

/// Which edges a query hides from the agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskPolicy {
    /// Only `(e_s, r_q, e_q)` and its inverse.
    #[default]
    QueryEdge,
    /// `(e_s, r_q, e)` for every known answer `e`, plus inverses.
    AllAnswers,
}

/// Read-only view of a graph with a handful of edges hidden.
#[derive(Clone, Debug)]
pub struct MaskedView<'g> {
    graph: &'g KnowledgeGraph,
    hidden: Vec<(EntityId, Action)>,
    missing: bool,
}

impl<'g> MaskedView<'g> {
    /// Hides a base edge and its inverse. Hiding an edge that does not exist
    /// leaves the view unchanged and sets [`MaskedView::missing_edge`].
    pub fn hide(mut self, head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        if !self.graph.contains(&Triple::new(head, relation, tail)) {
            self.missing = true;
            return self;
        }
        self.hidden.push((head, Action::new(relation, tail)));
        self.hidden.push((tail, Action::new(self.graph.inverse(relation), head)));
        self
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    /// True when some requested mask named an edge absent from the graph.
    pub fn missing_edge(&self) -> bool {
        self.missing
    }

    pub fn is_hidden(&self, entity: EntityId, action: &Action) -> bool {
        self.hidden.iter().any(|(e, a)| *e == entity && a == action)
    }

    pub fn action_space(&self, entity: EntityId) -> Result<Cow<'g, [Action]>, KgError> {
        self.graph.action_space(entity)?;
        Ok(self.actions(entity))
    }

    /// Like [`MaskedView::action_space`] for ids already known to be valid.
    pub fn actions(&self, entity: EntityId) -> Cow<'g, [Action]> {
        let all = self.graph.actions_unchecked(entity);
        if self.hidden.iter().any(|(e, _)| *e == entity) {
            Cow::Owned(all.iter().copied().filter(|a| !self.is_hidden(entity, a)).collect())
        } else {
            Cow::Borrowed(all)
        }
    }

    /// Whether `target` is reachable from `source` in at most `k` hops.
    pub fn reachable_within(&self, source: EntityId, target: EntityId, k: usize) -> bool {
        if source == target {
            return true;
        }
        let mut dist = vec![usize::MAX; self.graph.entity_count()];
        dist[source.index()] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.index()];
            if d == k {
                continue;
            }
            for a in self.actions(u).iter() {
                if dist[a.entity.index()] == usize::MAX {
                    if a.entity == target {
                        return true;
                    }
                    dist[a.entity.index()] = d + 1;
                    queue.push_back(a.entity);
                }
            }
        }
        false
    }
}

/// Summary statistics over the base (non-augmented) graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub entity_count: usize,
    pub relation_count: usize,
    pub fact_count: usize,
    pub mean_degree: f64,
    pub median_degree: f64,
    pub relation_frequency: BTreeMap<RelationId, usize>,
    /// `None` when no queries were supplied.
    pub k_hop_target_fraction: Option<f64>,
}

/// Degrees count base outgoing edges. The k-hop fraction walks the augmented
/// graph with each query's own edge hidden.
pub fn compute_stats(graph: &KnowledgeGraph, queries: Option<&[Query]>, k: usize) -> GraphStats {
    let n = graph.entity_count();
    let mut degree = vec![0usize; n];
    let mut relation_frequency = BTreeMap::new();
    for t in graph.triples() {
        degree[t.head.index()] += 1;
        *relation_frequency.entry(t.relation).or_insert(0) += 1;
    }
    let facts = graph.triples().len();
    let mean_degree = if n == 0 { 0.0 } else { facts as f64 / n as f64 };
    degree.sort_unstable();
    let median_degree = match n {
        0 => 0.0,
        _ if n % 2 == 1 => degree[n / 2] as f64,
        _ => (degree[n / 2 - 1] + degree[n / 2]) as f64 / 2.0,
    };
    let k_hop_target_fraction = queries.filter(|q| !q.is_empty()).map(|qs| {
        let hit = qs
            .iter()
            .filter(|q| {
                graph
                    .query_view(q, MaskPolicy::QueryEdge)
                    .reachable_within(q.source, q.target, k)
            })
            .count();
        hit as f64 / qs.len() as f64
    });
    GraphStats {
        entity_count: n,
        relation_count: graph.base_relation_count(),
        fact_count: facts,
        mean_degree,
        median_degree,
        relation_frequency,
        k_hop_target_fraction,
    }
}
