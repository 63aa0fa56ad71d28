//! Semantic ID construction: residual or product k-means codebooks, collision-free ID
//! assignment and the prefix trie used for constrained decoding.

mod codebook;
mod ids;
pub mod kmeans;
mod trie;

pub use codebook::{
    fit_pq, fit_rq, fit_traced, reconstruction_error, CodebookSet, FitTrace, Flavor, DEFAULT_CODES,
    DEFAULT_ITERS, DEFAULT_LAYERS,
};
pub use ids::{assign_ids, SemanticIdTable};
pub use trie::{build_trie, NodeId, PrefixTrie};
