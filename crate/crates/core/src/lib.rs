//! Structure learning for discrete Markov networks with the marginal
//! pseudo-likelihood score.
//!
//! Learning runs in two phases. Each node's Markov blanket is first found by
//! greedy local search ([`mb_search`]); the blankets are then combined into a
//! restricted edge space searched globally ([`global_search`], [`pbo`]).

pub mod baseline;
pub mod data;
pub mod error;
pub mod global_search;
pub mod graph;
pub mod mb_search;
pub mod pbo;
pub mod pipeline;
pub mod score;
pub mod synth;

pub use error::{Error, Result};
