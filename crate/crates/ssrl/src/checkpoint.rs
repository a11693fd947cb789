//! Checkpoint files.
//!
//! Layout: magic `SSRLCKPT`, `u32` version, `u32` tensor count, then per
//! tensor a length-prefixed UTF-8 name, `u32` rank, `u32` dims and raw
//! little-endian `f32` values; finally a length-prefixed JSON metadata block.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssrl_core::eval::BeamConfig;
use ssrl_core::kg::KnowledgeGraph;
use ssrl_core::policy::{Dims, PolicyError, PolicyParams, TENSOR_NAMES};

use crate::bytes::{Reader, Truncated, Writer};
use crate::config::parse_mask;

pub const MAGIC: &[u8; 8] = b"SSRLCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub code_version: String,
    pub seed: u64,
    /// `init`, `sl` or `rl`.
    pub stage: String,
    /// Supervised epochs completed.
    pub epoch: usize,
    /// Index of the next training batch.
    pub batch: usize,
    pub config_hash: String,
    pub horizon: usize,
    pub max_actions: usize,
    pub mask: String,
    pub entity_count: usize,
    pub relation_count: usize,
    pub vocab_hash: String,
    pub embed: usize,
    pub hidden: usize,
    pub ff: usize,
    pub baseline: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Truncated(#[from] Truncated),
    #[error("tensor {index}: expected `{expected}`, found `{found}`")]
    TensorName { index: usize, expected: &'static str, found: String },
    #[error("tensor `{name}` has rank {rank}; only matrices and vectors are stored")]
    Rank { name: String, rank: usize },
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("unknown mask `{0}` in metadata")]
    Mask(String),
    #[error("trailing bytes after metadata")]
    Trailing,
    #[error("tensor `{tensor}` does not fit this graph: {detail}")]
    VocabMismatch { tensor: &'static str, detail: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Short stable digest of the graph's vocabularies.
pub fn vocab_fingerprint(graph: &KnowledgeGraph) -> String {
    let mut h = Sha256::new();
    for name in graph.vocab().entities.names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    h.update([1]);
    for name in graph.vocab().relations.names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    hex16(&h.finalize())
}

pub fn hex16(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn is_vector(name: &str) -> bool {
    matches!(name, "lstm_bias" | "b1" | "b2")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams<f32>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Beam settings matching the horizon and mask the model was trained with.
    pub fn beam_config(&self, width: usize) -> Result<BeamConfig, CheckpointError> {
        let mask = parse_mask(&self.meta.mask).ok_or_else(|| CheckpointError::Mask(self.meta.mask.clone()))?;
        Ok(BeamConfig { width, horizon: self.meta.horizon, mask })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut w = Writer::new(MAGIC);
        w.u32(VERSION);
        let shapes = self.params.dims().tensor_shapes();
        w.len(shapes.len());
        for ((name, rows, cols), data) in shapes.iter().zip(self.params.tensors()) {
            w.bytes(name.as_bytes());
            if is_vector(name) {
                w.u32(1);
                w.len(*rows);
            } else {
                w.u32(2);
                w.len(*rows);
                w.len(*cols);
            }
            data.iter().for_each(|&x| w.f32(x));
        }
        w.bytes(&serde_json::to_vec(&self.meta)?);
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader::new(data, MAGIC).ok_or(CheckpointError::BadMagic)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let count = r.len()?;
        let mut shapes = Vec::new();
        let mut tensors = Vec::new();
        for index in 0..count {
            let name = String::from_utf8_lossy(r.bytes()?).into_owned();
            let expected = *TENSOR_NAMES.get(index).unwrap_or(&"<none>");
            if name != expected {
                return Err(CheckpointError::TensorName { index, expected, found: name });
            }
            let rank = r.len()?;
            let dims: Vec<usize> = match rank {
                1 => vec![r.len()?, 1],
                2 => vec![r.len()?, r.len()?],
                _ => return Err(CheckpointError::Rank { name, rank }),
            };
            let n = dims[0].checked_mul(dims[1]).ok_or(Truncated(r.position()))?;
            if n.checked_mul(4).map_or(true, |b| b > data.len()) {
                return Err(Truncated(r.position()).into());
            }
            let values = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
            shapes.push((dims[0], dims[1]));
            tensors.push(values);
        }
        let meta: CheckpointMeta = serde_json::from_slice(r.bytes()?)?;
        if !r.at_end() {
            return Err(CheckpointError::Trailing);
        }
        if shapes.len() != TENSOR_NAMES.len() {
            return Err(PolicyError::TensorCount { expected: TENSOR_NAMES.len(), found: shapes.len() }.into());
        }
        let dims = Dims {
            entities: shapes[0].0,
            relations: shapes[1].0,
            embed: meta.embed,
            hidden: meta.hidden,
            ff: meta.ff,
        };
        let params = PolicyParams::from_tensors(dims, tensors)?;
        Ok(Checkpoint { params, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rejects checkpoints trained on a different vocabulary.
    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<(), CheckpointError> {
        let dims = self.params.dims();
        if dims.entities != graph.entity_count() {
            return Err(CheckpointError::VocabMismatch {
                tensor: TENSOR_NAMES[0],
                detail: format!("{} rows, graph has {} entities", dims.entities, graph.entity_count()),
            });
        }
        if dims.relations != graph.relation_count() {
            return Err(CheckpointError::VocabMismatch {
                tensor: TENSOR_NAMES[1],
                detail: format!("{} rows, graph has {} relations", dims.relations, graph.relation_count()),
            });
        }
        let fp = vocab_fingerprint(graph);
        if fp != self.meta.vocab_hash {
            return Err(CheckpointError::VocabMismatch {
                tensor: TENSOR_NAMES[0],
                detail: format!("vocabulary digest {} differs from the graph's {fp}", self.meta.vocab_hash),
            });
        }
        Ok(())
    }
}
