//! Small generated graphs for tests and demos.
//!
//! `composition` plants a two-hop rule: every `rq` fact equals some
//! `r1` then `r2` path, so a policy that learns the rule answers `rq` queries
//! from the remaining edges.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Chain,
    Grid,
    Composition,
}

impl SynthKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chain" => Some(SynthKind::Chain),
            "grid" => Some(SynthKind::Grid),
            "composition" => Some(SynthKind::Composition),
            _ => None,
        }
    }
}

/// A generated triple by names.
pub type NamedTriple = (String, String, String);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynthGraph {
    /// Background facts plus the training query facts.
    pub train: Vec<NamedTriple>,
    pub dev: Vec<NamedTriple>,
    pub test: Vec<NamedTriple>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("{kind} graph needs at least {min} entities, got {got}")]
    TooSmall { kind: &'static str, min: usize, got: usize },
}

impl SynthGraph {
    /// Tab-separated triple file contents.
    pub fn tsv(triples: &[NamedTriple]) -> String {
        let mut out = String::new();
        for (h, r, t) in triples {
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out
    }
}

const SYNTH_TAG: u64 = 0x5359;

fn triple(h: String, r: &str, t: String) -> NamedTriple {
    (h, String::from(r), t)
}

/// Builds a graph of `kind` with about `size` entities.
pub fn make_synthetic(kind: SynthKind, size: usize, seed: u64) -> Result<SynthGraph, SynthError> {
    match kind {
        SynthKind::Chain => chain(size),
        SynthKind::Grid => grid(size),
        SynthKind::Composition => composition(size, seed),
    }
}

/// `e0 -next-> e1 -> ...`; queries ask for the node two hops ahead.
fn chain(size: usize) -> Result<SynthGraph, SynthError> {
    if size < 4 {
        return Err(SynthError::TooSmall { kind: "chain", min: 4, got: size });
    }
    let name = |i: usize| format!("e{i}");
    let mut g = SynthGraph::default();
    for i in 0..size - 1 {
        g.train.push(triple(name(i), "next", name(i + 1)));
    }
    for i in 0..size - 2 {
        let t = triple(name(i), "skip", name(i + 2));
        match i % 5 {
            3 => g.dev.push(t),
            4 => g.test.push(t),
            _ => g.train.push(t),
        }
    }
    Ok(g)
}

/// Square grid with `right`/`down` edges; `diag` queries are right-then-down.
fn grid(size: usize) -> Result<SynthGraph, SynthError> {
    let side = num_traits::Float::sqrt(size as f64) as usize;
    if side < 3 {
        return Err(SynthError::TooSmall { kind: "grid", min: 9, got: size });
    }
    let name = |r: usize, c: usize| format!("n{r}_{c}");
    let mut g = SynthGraph::default();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                g.train.push(triple(name(r, c), "right", name(r, c + 1)));
            }
            if r + 1 < side {
                g.train.push(triple(name(r, c), "down", name(r + 1, c)));
            }
        }
    }
    let mut k = 0;
    for r in 0..side - 1 {
        for c in 0..side - 1 {
            let t = triple(name(r, c), "diag", name(r + 1, c + 1));
            match k % 5 {
                3 => g.dev.push(t),
                4 => g.test.push(t),
                _ => g.train.push(t),
            }
            k += 1;
        }
    }
    Ok(g)
}

/// Three entity layers with `r1: A -> B`, `r2: B -> C` and `rq = r1 . r2`,
/// plus distractors `r3: A -> B`, `r4: B -> C` and random `r5` edges.
/// 80% of the `rq` facts are training facts and the rest are test facts;
/// every other test fact is also listed as a dev fact for monitoring.
fn composition(size: usize, seed: u64) -> Result<SynthGraph, SynthError> {
    if size < 20 {
        return Err(SynthError::TooSmall { kind: "composition", min: 20, got: size });
    }
    let mut rng = rng::stream(seed, &[SYNTH_TAG]);
    let na = size * 2 / 5;
    let nb = (size - na) / 2;
    let nc = size - na - nb;
    let a = |i: usize| format!("a{i}");
    let b = |i: usize| format!("b{i}");
    let c = |i: usize| format!("c{i}");
    let mut g = SynthGraph::default();

    // Each A has one r1 successor and each B one r2 successor, so rq is functional.
    let mut b_next = Vec::with_capacity(nb);
    for j in 0..nb {
        let k = rng.gen_range(0..nc);
        b_next.push(k);
        g.train.push(triple(b(j), "r2", c(k)));
    }
    let mut rq = Vec::with_capacity(na);
    for i in 0..na {
        let j = rng.gen_range(0..nb);
        g.train.push(triple(a(i), "r1", b(j)));
        rq.push(triple(a(i), "rq", c(b_next[j])));
    }
    for i in 0..na {
        let j = rng.gen_range(0..nb);
        g.train.push(triple(a(i), "r3", b(j)));
    }
    for j in 0..nb {
        let k = rng.gen_range(0..nc);
        g.train.push(triple(b(j), "r4", c(k)));
    }
    let all: Vec<String> = (0..na).map(a).chain((0..nb).map(b)).chain((0..nc).map(c)).collect();
    for _ in 0..size / 2 {
        let h = rng.gen_range(0..all.len());
        let t = rng.gen_range(0..all.len());
        g.train.push(triple(all[h].clone(), "r5", all[t].clone()));
    }

    let mut order: Vec<usize> = (0..rq.len()).collect();
    rng::shuffle(&mut order, &mut rng);
    let n_train = rq.len() * 4 / 5;
    for (pos, &i) in order.iter().enumerate() {
        let t = rq[i].clone();
        if pos < n_train {
            g.train.push(t);
        } else {
            if (pos - n_train) % 2 == 0 {
                g.dev.push(t.clone());
            }
            g.test.push(t);
        }
    }
    Ok(g)
}

/// Random multigraph over `e0..` and `r0..` in which every entity has at
/// most `max_out` outgoing facts. Duplicate facts are not produced.
pub fn random_triples(entities: usize, relations: usize, max_out: usize, seed: u64) -> Vec<NamedTriple> {
    let mut rng = rng::stream(seed, &[SYNTH_TAG, 1]);
    let mut out: Vec<NamedTriple> = Vec::new();
    if entities == 0 || relations == 0 {
        return out;
    }
    for h in 0..entities {
        let k = rng.gen_range(0..=max_out);
        for _ in 0..k {
            let t = (format!("e{h}"), format!("r{}", rng.gen_range(0..relations)), format!("e{}", rng.gen_range(0..entities)));
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out
}
