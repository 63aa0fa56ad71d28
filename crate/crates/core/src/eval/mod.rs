//! Trie-constrained decoding and ranking metrics.

mod beam;
mod metrics;
mod report;

pub use beam::{constrained_beam_search, RankedItem, RankedList};
pub use metrics::{decile_report, frequency_ranking, head_tail_split, hit_at_k, ndcg_at_k, DecileReport, HeadTail};
pub use report::{evaluate, EvalConfig, EvalReport, EvalSplit, GroupReport};
