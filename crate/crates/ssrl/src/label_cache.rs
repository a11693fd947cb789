//! Binary label cache.
//!
//! Layout (little-endian `u32` throughout): magic `SSRLLBL1`, format
//! version, entity count, relation count, label-set count; then per set:
//! source, relation, target, depth, answer count and ids, correct-node count
//! and ids, labelled-node count, and per node its entity id, label length and
//! the labels packed eight per byte, least significant bit first.

use std::path::Path;

use ssrl_core::kg::{EntityId, KnowledgeGraph, RelationId};
use ssrl_core::labels::LabelSet;
use ssrl_core::Query;

use crate::bytes::{Reader, Truncated, Writer};

pub const MAGIC: &[u8; 8] = b"SSRLLBL1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("not a label cache (bad magic)")]
    BadMagic,
    #[error("unsupported label cache version {0}")]
    Version(u32),
    #[error(transparent)]
    Truncated(#[from] Truncated),
    #[error("trailing bytes after the last label set")]
    Trailing,
    #[error("cache built for {cached_entities} entities / {cached_relations} relations, graph has {entities} / {relations}")]
    GraphMismatch { cached_entities: usize, cached_relations: usize, entities: usize, relations: usize },
    #[error("label set {index}: {reason}")]
    Inconsistent { index: usize, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCache {
    pub entity_count: usize,
    pub relation_count: usize,
    pub sets: Vec<LabelSet>,
}

impl LabelCache {
    pub fn new(graph: &KnowledgeGraph, sets: Vec<LabelSet>) -> Self {
        LabelCache { entity_count: graph.entity_count(), relation_count: graph.relation_count(), sets }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u32(VERSION);
        w.len(self.entity_count);
        w.len(self.relation_count);
        w.len(self.sets.len());
        for s in &self.sets {
            w.u32(s.query.source.0);
            w.u32(s.query.relation.0);
            w.u32(s.query.target.0);
            w.len(s.depth);
            w.len(s.e_all.len());
            s.e_all.iter().for_each(|e| w.u32(e.0));
            w.len(s.correct_nodes.len());
            s.correct_nodes.iter().for_each(|e| w.u32(e.0));
            w.len(s.labels.len());
            for (e, bits) in &s.labels {
                w.u32(e.0);
                w.len(bits.len());
                let mut packed = vec![0u8; bits.len().div_ceil(8)];
                for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                    packed[i / 8] |= 1 << (i % 8);
                }
                w.buf.extend_from_slice(&packed);
            }
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, CacheError> {
        let mut r = Reader::new(data, MAGIC).ok_or(CacheError::BadMagic)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(CacheError::Version(version));
        }
        let entity_count = r.len()?;
        let relation_count = r.len()?;
        let n = r.len()?;
        let mut sets = Vec::with_capacity(n.min(1 << 20));
        for index in 0..n {
            let query = Query::new(EntityId(r.u32()?), RelationId(r.u32()?), EntityId(r.u32()?));
            let depth = r.len()?;
            let ids = |r: &mut Reader<'_>| -> Result<Vec<EntityId>, CacheError> {
                let k = r.len()?;
                (0..k).map(|_| Ok(EntityId(r.u32()?))).collect()
            };
            let e_all = ids(&mut r)?;
            let correct_nodes = ids(&mut r)?;
            let nodes = r.len()?;
            let mut labels = std::collections::BTreeMap::new();
            for _ in 0..nodes {
                let e = EntityId(r.u32()?);
                let len = r.len()?;
                let packed = r.take(len.div_ceil(8))?;
                let bits: Vec<bool> = (0..len).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
                if labels.insert(e, bits).is_some() {
                    return Err(CacheError::Inconsistent { index, reason: format!("entity {} listed twice", e.0) });
                }
            }
            sets.push(LabelSet { query, e_all, correct_nodes, labels, depth });
        }
        if !r.at_end() {
            return Err(CacheError::Trailing);
        }
        Ok(LabelCache { entity_count, relation_count, sets })
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Checks that every label vector matches the masked action list it
    /// was generated against.
    pub fn validate(&self, graph: &KnowledgeGraph, mask: ssrl_core::kg::MaskPolicy) -> Result<(), CacheError> {
        if self.entity_count != graph.entity_count() || self.relation_count != graph.relation_count() {
            return Err(CacheError::GraphMismatch {
                cached_entities: self.entity_count,
                cached_relations: self.relation_count,
                entities: graph.entity_count(),
                relations: graph.relation_count(),
            });
        }
        for (index, s) in self.sets.iter().enumerate() {
            graph
                .check_query(&s.query)
                .map_err(|e| CacheError::Inconsistent { index, reason: e.to_string() })?;
            let view = graph.query_view(&s.query, mask);
            for (e, bits) in &s.labels {
                if e.index() >= graph.entity_count() {
                    return Err(CacheError::Inconsistent { index, reason: format!("entity {} out of range", e.0) });
                }
                let n = view.actions(*e).len();
                if n != bits.len() {
                    return Err(CacheError::Inconsistent {
                        index,
                        reason: format!("entity {} has {} labels for {} actions", e.0, bits.len(), n),
                    });
                }
            }
        }
        Ok(())
    }
}
