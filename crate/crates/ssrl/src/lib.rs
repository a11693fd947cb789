//! File formats, configuration and the command-line front end for
//! [`ssrl_core`].

mod bytes;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod label_cache;
pub mod output;
pub mod pipeline;

pub use ssrl_core as core;
