//! Dataset directories and triple/vocabulary files.
//!
//! A dataset directory holds `train.txt`, and optionally `dev.txt`,
//! `test.txt`, `graph.txt` (background graph; defaults to `train.txt`) and
//! `entity_vocab.tsv` / `relation_vocab.tsv` (`name<TAB>id` lines).

use std::fs;
use std::path::{Path, PathBuf};

use ssrl_core::eval::KnownAnswers;
use ssrl_core::kg::{KgError, KnowledgeGraph, Vocab, Vocabularies};
use ssrl_core::{Query, Triple};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Graph { path: PathBuf, source: KgError },
    #[error("{path}: line {line}: expected `name<TAB>id`")]
    VocabLine { path: PathBuf, line: usize },
    #[error("{0}")]
    Invalid(String),
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| DataError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Reads a `name<TAB>id` table.
pub fn read_vocab(path: &Path) -> Result<Vocab, DataError> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || DataError::VocabLine { path: path.to_path_buf(), line: i + 1 };
        let (name, id) = line.split_once('\t').ok_or_else(bad)?;
        let id: u32 = id.trim().parse().map_err(|_| bad())?;
        pairs.push((name.to_string(), id));
    }
    Vocab::from_pairs(pairs).map_err(|source| DataError::Graph { path: path.to_path_buf(), source })
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<(), DataError> {
    let mut out = String::new();
    for (id, name) in vocab.names().enumerate() {
        out.push_str(&format!("{name}\t{id}\n"));
    }
    write_text(path, &out)
}

/// Builds a graph from one triple file with a fresh vocabulary.
pub fn load_graph_file(path: &Path, max_actions: usize) -> Result<KnowledgeGraph, DataError> {
    let text = read_text(path)?;
    KnowledgeGraph::ingest(&text, None, max_actions).map_err(|source| DataError::Graph { path: path.to_path_buf(), source })
}

/// A loaded dataset directory. All splits share the graph's vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub graph: KnowledgeGraph,
    pub train: Vec<Query>,
    pub dev: Vec<Query>,
    pub test: Vec<Query>,
    /// Every known fact of every split, for filtered ranking.
    pub known: KnownAnswers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" | "valid" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Query] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Graph file used as the walkable background graph.
    pub fn graph_path(dir: &Path) -> PathBuf {
        let g = dir.join("graph.txt");
        if g.exists() {
            g
        } else {
            dir.join("train.txt")
        }
    }

    /// Loads `dir`. Without vocabulary files, ids are assigned in
    /// first-appearance order over graph, train, dev and test.
    pub fn load(dir: &Path, max_actions: usize) -> Result<Dataset, DataError> {
        let graph_path = Self::graph_path(dir);
        let split_paths = [dir.join("train.txt"), dir.join("dev.txt"), dir.join("test.txt")];
        if !split_paths[0].exists() {
            return Err(DataError::Io {
                path: split_paths[0].clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing training split"),
            });
        }
        let ev = dir.join("entity_vocab.tsv");
        let rv = dir.join("relation_vocab.tsv");
        let mut vocab = if ev.exists() && rv.exists() {
            let mut v = Vocabularies::from_tables(read_vocab(&ev)?, &read_vocab(&rv)?)
                .map_err(|source| DataError::Graph { path: rv.clone(), source })?;
            v.freeze();
            v
        } else {
            Vocabularies::new()
        };
        let parse = |vocab: &mut Vocabularies, path: &Path| -> Result<Vec<Triple>, DataError> {
            if !path.exists() {
                return Ok(Vec::new());
            }
            vocab.parse_triples(&read_text(path)?).map_err(|source| DataError::Graph { path: path.to_path_buf(), source })
        };
        let graph_triples = parse(&mut vocab, &graph_path)?;
        let mut splits = Vec::with_capacity(3);
        for p in &split_paths {
            splits.push(parse(&mut vocab, p)?);
        }
        let test = splits.pop().unwrap();
        let dev = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        let known = KnownAnswers::from_triples(graph_triples.iter().chain(&train).chain(&dev).chain(&test));
        let graph = KnowledgeGraph::from_triples(vocab, graph_triples, max_actions)
            .map_err(|source| DataError::Graph { path: graph_path.clone(), source })?;
        let q = |ts: Vec<Triple>| ts.into_iter().map(Query::from).collect();
        Ok(Dataset { dir: dir.to_path_buf(), graph, train: q(train), dev: q(dev), test: q(test), known })
    }

    /// Training queries restricted to the named relations (all when empty).
    pub fn train_queries(&self, relations: &[String]) -> Result<Vec<Query>, DataError> {
        if relations.is_empty() {
            return Ok(self.train.clone());
        }
        let mut ids = Vec::new();
        for name in relations {
            let r = self
                .graph
                .vocab()
                .relation(name)
                .ok_or_else(|| DataError::Invalid(format!("unknown relation `{name}`")))?;
            ids.push(r);
        }
        Ok(self.train.iter().filter(|q| ids.contains(&q.relation)).copied().collect())
    }

    /// Resolves `head,relation` into a query whose target is unknown
    /// (the source itself stands in).
    /// Parses `head,relation[,tail]`. Without a tail the query's target is
    /// the head and the second value is `false`.
    pub fn parse_query(&self, spec: &str) -> Result<(Query, bool), DataError> {
        let mut parts = spec.split(',').map(str::trim);
        let (Some(h), Some(r), t, None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(DataError::Invalid(format!("query `{spec}` is not `head,relation[,tail]`")));
        };
        let vocab = self.graph.vocab();
        let ent = |n: &str| vocab.entity(n).ok_or_else(|| DataError::Invalid(format!("unknown entity `{n}`")));
        let source = ent(h)?;
        let relation = vocab.relation(r).ok_or_else(|| DataError::Invalid(format!("unknown relation `{r}`")))?;
        let target = match t {
            Some(t) => ent(t)?,
            None => source,
        };
        Ok((Query::new(source, relation, target), t.is_some()))
    }
}
