//! Deterministic walk environment for one query.
//!
//! The agent starts at the source, picks an outgoing edge at each of
//! `horizon` steps and receives reward 1 at the last step iff it stands on
//! the target. The query's own edge is hidden for the whole episode.

use alloc::borrow::Cow;

use crate::kg::{Action, EntityId, KgError, KnowledgeGraph, MaskPolicy, MaskedView, Query, RelationId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("episode already finished")]
    EpisodeComplete,
    #[error("action index {index} out of range for {len} actions")]
    ActionOutOfRange { index: usize, len: usize },
    #[error("no labels for entity {0}")]
    LabelsExhausted(EntityId),
    #[error("label vector has length {found}, action list has {expected}")]
    LabelLength { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] KgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvConfig {
    pub horizon: usize,
    pub mask: MaskPolicy,
    /// Whether a rejected supervised sample still uses up a time step.
    pub consume_step_on_reject: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { horizon: 3, mask: MaskPolicy::QueryEdge, consume_step_on_reject: false }
    }
}

/// What the agent sees: never the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub source: EntityId,
    pub relation: RelationId,
    pub current: EntityId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlOutcome {
    Applied,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct EnvState<'g> {
    view: MaskedView<'g>,
    query: Query,
    current: EntityId,
    step: usize,
    config: EnvConfig,
}

/// Starts an episode at the query source with default options.
pub fn reset<'g>(graph: &'g KnowledgeGraph, query: Query, horizon: usize) -> Result<EnvState<'g>, EnvError> {
    EnvState::new(graph, query, EnvConfig { horizon, ..EnvConfig::default() })
}

impl<'g> EnvState<'g> {
    pub fn new(graph: &'g KnowledgeGraph, query: Query, config: EnvConfig) -> Result<Self, EnvError> {
        if config.horizon == 0 {
            return Err(EnvError::ZeroHorizon);
        }
        graph.check_query(&query)?;
        Ok(EnvState {
            view: graph.query_view(&query, config.mask),
            query,
            current: query.source,
            step: 0,
            config,
        })
    }

    pub fn observation(&self) -> Observation {
        Observation {
            source: self.query.source,
            relation: self.query.relation,
            current: self.current,
        }
    }

    pub fn current(&self) -> EntityId {
        self.current
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.horizon
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn view(&self) -> &MaskedView<'g> {
        &self.view
    }

    pub fn actions(&self) -> Cow<'g, [Action]> {
        self.view.actions(self.current)
    }

    fn chosen(&self, index: usize) -> Result<Action, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeComplete);
        }
        let actions = self.actions();
        actions
            .get(index)
            .copied()
            .ok_or(EnvError::ActionOutOfRange { index, len: actions.len() })
    }

    /// Applies action `index`. Returns the reward, which is nonzero only on
    /// the final step.
    pub fn step(&mut self, index: usize) -> Result<f64, EnvError> {
        let action = self.chosen(index)?;
        self.current = action.entity;
        self.step += 1;
        if self.step == self.config.horizon && self.current == self.query.target {
            Ok(1.0)
        } else {
            Ok(0.0)
        }
    }

    /// Supervised transition: the action is applied only when its label is
    /// set. A rejected sample leaves the walker in place and, unless
    /// `consume_step_on_reject`, also leaves the step counter alone.
    pub fn sl_step(&mut self, index: usize, label: Option<&[bool]>) -> Result<SlOutcome, EnvError> {
        let action = self.chosen(index)?;
        let label = label.ok_or(EnvError::LabelsExhausted(self.current))?;
        let n = self.actions().len();
        if label.len() != n {
            return Err(EnvError::LabelLength { expected: n, found: label.len() });
        }
        if label[index] {
            self.current = action.entity;
            self.step += 1;
            Ok(SlOutcome::Applied)
        } else {
            if self.config.consume_step_on_reject {
                self.step += 1;
            }
            Ok(SlOutcome::Rejected)
        }
    }
}
