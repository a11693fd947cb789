//! Multi-hop query answering over knowledge graphs with a recurrent policy
//! that is first pretrained on breadth-first path labels and then fine-tuned
//! with REINFORCE.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (on by default)
//! only switches the float backend; `parallel` adds rayon-backed rollouts
//! whose results are bit-identical to the sequential path.
//!
//! Module map:
//!
//! - [`kg`]: vocabularies, augmented adjacency, masked views, statistics
//! - [`labels`]: answer sets, correct-edge oracle and per-node action labels
//! - [`policy`]: embeddings, LSTM history encoder, action scorer, backprop
//! - [`env`]: the deterministic rollout environment
//! - [`train`]: supervised warm-up, REINFORCE batches, schedule and sweeps
//! - [`eval`]: beam search, ranking, Hits@k / MRR and reporting helpers
//! - [`synth`]: deterministic synthetic graphs for desk-scale experiments
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod env;
pub mod eval;
pub mod kg;
pub mod labels;
pub mod objective;
pub mod optim;
pub mod policy;
pub mod real;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use kg::{Action, EntityId, KnowledgeGraph, Query, RelationId, Triple, NO_OP};
pub use real::Real;

/// Maps `f` over `items`, in parallel with the `parallel` feature. Output
/// order always follows input order.
pub(crate) fn par_map<I, O, F>(items: &[I], f: F) -> alloc::vec::Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(usize, &I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
}
