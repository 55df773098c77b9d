//! Discourse understanding for retrieval-based dialogue.
//!
//! A conversation is folded, utterance by utterance, into a set of
//! "discourse tokens": the canonical projections obtained by running
//! (deep) canonical correlation analysis between the accumulated state and
//! each new utterance. Candidate responses are ranked by cosine similarity
//! against those tokens, and [`eval`] scores the rankings.
//!
//! Layout:
//! - [`embedding`]: tokenizer and token-embedding providers.
//! - [`cca`]: closed-form linear CCA and its objective gradient.
//! - [`dcca`]: deep CCA with two small feed-forward networks.
//! - [`discourse`]: the left-to-right discourse-token fold.
//! - [`retrieval`]: candidate scoring and ranking.
//! - [`data`]: corpus loading, triples and retrieval instances.
//! - [`eval`]: Recall_n@k, BLEU, ROUGE, distinct-n and perplexity.
//! - [`synth`]: deterministic synthetic dialogue corpus.
//! - [`config`] / [`pipeline`]: run configuration and the CLI stages.

pub mod cca;
pub mod config;
pub mod data;
pub mod dcca;
pub mod discourse;
pub mod embedding;
mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod retrieval;
pub mod synth;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
