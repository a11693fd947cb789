//! Run configuration: `key = value` files plus `--set key=value` overrides.
//!
//! A `preset` is applied first wherever it appears; every other key is then
//! applied in file order followed by the overrides, so explicit keys always
//! beat preset values and later assignments beat earlier ones.

use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use ssrl_core::kg::{MaskPolicy, DEFAULT_MAX_ACTIONS};
use ssrl_core::optim::OptimizerKind;
use ssrl_core::train::{preset, Hyperparams, StepReduction};

use crate::checkpoint::hex16;

pub const CODE_VERSION: &str = concat!("ssrl ", env!("CARGO_PKG_VERSION"));

/// Where a setting came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "override #{n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: expected `key = value`, found `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: bad value `{value}` for `{key}`: {reason}")]
    BadValue { origin: Origin, key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub hyper: Hyperparams,
    pub max_actions: usize,
    /// Label search depth; follows the horizon unless set.
    pub label_depth: Option<usize>,
    pub train_relations: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            graph: None,
            labels: None,
            out: None,
            preset: None,
            hyper: Hyperparams::default(),
            max_actions: DEFAULT_MAX_ACTIONS,
            label_depth: None,
            train_relations: Vec::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "graph",
    "labels",
    "out",
    "preset",
    "seed",
    "lr",
    "optimizer",
    "max_grad_norm",
    "gamma",
    "sl.beta",
    "sl.lambda",
    "sl.epochs",
    "sl.max_steps",
    "sl.reduction",
    "sl.max_resamples",
    "sl.consume_step_on_reject",
    "rl.beta",
    "rl.lambda",
    "rl.batches",
    "batch_size",
    "rollouts",
    "horizon",
    "beam",
    "mask",
    "filtered",
    "eval_every",
    "embed",
    "hidden",
    "ff",
    "max_actions",
    "label.depth",
    "train.relations",
];

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_opt<T: std::str::FromStr>(v: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if v == "none" {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

pub fn parse_mask(s: &str) -> Option<MaskPolicy> {
    match s {
        "query_edge" => Some(MaskPolicy::QueryEdge),
        "all_answers" => Some(MaskPolicy::AllAnswers),
        _ => None,
    }
}

pub fn mask_name(m: MaskPolicy) -> &'static str {
    match m {
        MaskPolicy::QueryEdge => "query_edge",
        MaskPolicy::AllAnswers => "all_answers",
    }
}

fn opt_str<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Sets one key. Unknown keys return `Ok(false)`.
    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        let h = &mut self.hyper;
        match key {
            "graph" => self.graph = Some(PathBuf::from(v)),
            "labels" => self.labels = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "preset" => {
                let p = preset(v).ok_or_else(|| "unknown preset".to_string())?;
                h.apply_preset(p);
                self.preset = Some(p.name.to_string());
            }
            "seed" => h.seed = parse_num(v)?,
            "lr" => h.learning_rate = parse_num(v)?,
            "optimizer" => {
                h.optimizer = match v {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err("expected adam or sgd".into()),
                }
            }
            "max_grad_norm" => h.max_grad_norm = parse_opt(v)?,
            "gamma" => h.gamma = parse_num(v)?,
            "sl.beta" => h.sl.beta = parse_num(v)?,
            "sl.lambda" => h.sl.lambda = parse_num(v)?,
            "sl.epochs" => h.sl_epochs = parse_num(v)?,
            "sl.max_steps" => h.sl_max_steps = parse_opt(v)?,
            "sl.reduction" => {
                h.sl_reduction = match v {
                    "sum" => StepReduction::Sum,
                    "mean" => StepReduction::Mean,
                    _ => return Err("expected sum or mean".into()),
                }
            }
            "sl.max_resamples" => h.max_resamples = parse_num(v)?,
            "sl.consume_step_on_reject" => h.consume_step_on_reject = parse_bool(v)?,
            "rl.beta" => h.rl.beta = parse_num(v)?,
            "rl.lambda" => h.rl.lambda = parse_num(v)?,
            "rl.batches" => h.rl_batches = parse_num(v)?,
            "batch_size" => h.batch_size = parse_num(v)?,
            "rollouts" => h.rollouts_per_query = parse_num(v)?,
            "horizon" => h.horizon = parse_num(v)?,
            "beam" => h.beam_width = parse_num(v)?,
            "mask" => {
                h.mask = parse_mask(v).ok_or("expected query_edge or all_answers")?;
            }
            "filtered" => h.filtered = parse_bool(v)?,
            "eval_every" => h.eval_every = parse_num(v)?,
            "embed" => h.dims.embed = parse_num(v)?,
            "hidden" => h.dims.hidden = parse_num(v)?,
            "ff" => h.dims.ff = parse_num(v)?,
            "max_actions" => self.max_actions = parse_num(v)?,
            "label.depth" => self.label_depth = parse_opt(v)?,
            "train.relations" => {
                self.train_relations =
                    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies `(origin, key, value)` entries with preset-first precedence.
    pub fn from_entries(entries: &[(Origin, String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let apply = |cfg: &mut RunConfig, (origin, key, value): &(Origin, String, String)| {
            match cfg.set(key, value) {
                Ok(true) => Ok(()),
                Ok(false) => Err(ConfigError::UnknownKey { origin: origin.clone(), key: key.clone() }),
                Err(reason) => Err(ConfigError::BadValue {
                    origin: origin.clone(),
                    key: key.clone(),
                    value: value.clone(),
                    reason,
                }),
            }
        };
        if let Some(p) = entries.iter().rev().find(|e| e.1 == "preset") {
            apply(&mut cfg, p)?;
        }
        for e in entries.iter().filter(|e| e.1 != "preset") {
            apply(&mut cfg, e)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text and `key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut entries = parse_lines(text)?;
        for (i, o) in overrides.iter().enumerate() {
            let origin = Origin::Override(i + 1);
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), text: o.clone() })?;
            entries.push((origin, k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_entries(&entries)
    }

    /// Reads `path` (if any) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hyper.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.max_actions == 0 {
            return Err(ConfigError::Invalid("max_actions must be at least 1".into()));
        }
        if self.label_depth == Some(0) {
            return Err(ConfigError::Invalid("label.depth must be at least 1".into()));
        }
        let d = self.hyper.dims;
        if d.embed == 0 || d.hidden == 0 || d.ff == 0 {
            return Err(ConfigError::Invalid("embed, hidden and ff must be positive".into()));
        }
        Ok(())
    }

    pub fn label_depth(&self) -> usize {
        self.label_depth.unwrap_or(self.hyper.horizon)
    }

    /// Every setting in canonical order; parsing this text reproduces the
    /// configuration.
    pub fn resolved(&self) -> String {
        let h = &self.hyper;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut lines: Vec<(&str, String)> = Vec::new();
        if let Some(g) = path(&self.graph) {
            lines.push(("graph", g));
        }
        if let Some(l) = path(&self.labels) {
            lines.push(("labels", l));
        }
        if let Some(o) = path(&self.out) {
            lines.push(("out", o));
        }
        lines.extend([
            ("seed", h.seed.to_string()),
            ("lr", h.learning_rate.to_string()),
            ("optimizer", match h.optimizer {
                OptimizerKind::Adam => "adam".into(),
                OptimizerKind::Sgd => "sgd".into(),
            }),
            ("max_grad_norm", opt_str(&h.max_grad_norm)),
            ("gamma", h.gamma.to_string()),
            ("sl.beta", h.sl.beta.to_string()),
            ("sl.lambda", h.sl.lambda.to_string()),
            ("sl.epochs", h.sl_epochs.to_string()),
            ("sl.max_steps", opt_str(&h.sl_max_steps)),
            ("sl.reduction", match h.sl_reduction {
                StepReduction::Sum => "sum".into(),
                StepReduction::Mean => "mean".into(),
            }),
            ("sl.max_resamples", h.max_resamples.to_string()),
            ("sl.consume_step_on_reject", h.consume_step_on_reject.to_string()),
            ("rl.beta", h.rl.beta.to_string()),
            ("rl.lambda", h.rl.lambda.to_string()),
            ("rl.batches", h.rl_batches.to_string()),
            ("batch_size", h.batch_size.to_string()),
            ("rollouts", h.rollouts_per_query.to_string()),
            ("horizon", h.horizon.to_string()),
            ("beam", h.beam_width.to_string()),
            ("mask", mask_name(h.mask).into()),
            ("filtered", h.filtered.to_string()),
            ("eval_every", h.eval_every.to_string()),
            ("embed", h.dims.embed.to_string()),
            ("hidden", h.dims.hidden.to_string()),
            ("ff", h.dims.ff.to_string()),
            ("max_actions", self.max_actions.to_string()),
            ("label.depth", self.label_depth().to_string()),
            ("train.relations", self.train_relations.join(",")),
        ]);
        let mut out = format!("# {CODE_VERSION}\n");
        if let Some(p) = &self.preset {
            out.push_str(&format!("# preset {p} (values expanded below)\n"));
        }
        for (k, v) in lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Digest of every setting that affects training, excluding file paths.
    pub fn hash(&self) -> String {
        let text: String = self
            .resolved()
            .lines()
            .filter(|l| !l.starts_with('#') && !["graph", "labels", "out"].contains(&l.split(" = ").next().unwrap_or("")))
            .map(|l| format!("{l}\n"))
            .collect();
        hex16(&Sha256::digest(text.as_bytes()))
    }
}

/// Splits config text into entries, skipping blanks and `#` comments.
pub fn parse_lines(text: &str) -> Result<Vec<(Origin, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let origin = Origin::Line(i + 1);
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), text: line.to_string() })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { origin, text: line.to_string() });
        }
        out.push((origin, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
