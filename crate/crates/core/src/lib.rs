//! Token-weighted multi-target training for generative recommenders.
//!
//! Items are mapped to short sequences of codebook indices ("semantic IDs"), user
//! histories are flattened into token sequences, and a small encoder-decoder model is
//! trained to emit the next item's ID. The loss mixes three token-weighted
//! cross-entropies (front-greater, frequency and plain) under a curriculum schedule.
//!
//! Layout:
//! - [`data`]: ingestion, 5-core filtering, leave-one-out splits, synthetic worlds, flattening
//! - [`quant`]: residual / product k-means codebooks, semantic ID tables, prefix trie
//! - [`weights`]: dispersion profiles, front-greater and frequency weights, diagnostics
//! - [`objective`]: weighted NLL, curriculum mixing, multi-target loss
//! - [`model`]: encoder-decoder transformer with manual backprop, optimizer, checkpoints, training
//! - [`eval`]: trie-constrained beam search and ranking metrics
//! - [`pipeline`]: the command implementations behind the CLI

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod objective;
pub mod pipeline;
pub mod quant;
pub mod weights;

mod util;

pub use error::{Error, Result};
