//! Interaction data: ingestion, filtering, splitting, synthetic generation and the
//! flattening of histories into semantic-ID token sequences.

mod embeddings;
mod filter;
mod flatten;
mod ingest;
mod split;
mod synth;

use std::collections::BTreeSet;

pub use embeddings::ItemEmbeddingTable;
pub use filter::apply_five_core;
pub use flatten::{flatten_history, FlatSample, TokenVocab, DEFAULT_MAX_ITEMS};
pub use ingest::{ingest_interactions, InteractionFormat};
pub use split::{leave_one_out_split, Sample, SplitDataset};
pub use synth::{generate_synthetic, PopularitySampler, SynthConfig, SyntheticWorld};

use crate::error::{Error, Result};

/// One user's interactions in timestamp order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user: String,
    pub items: Vec<String>,
}

/// Users with their ordered interaction lists plus the set of items they may reference.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionDataset {
    pub users: Vec<UserHistory>,
    pub item_universe: BTreeSet<String>,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub(crate) struct InteractionRow<'a> {
    pub user: &'a str,
    pub item: &'a str,
    pub ts: i64,
}

impl InteractionDataset {
    /// Builds a dataset whose universe is exactly the referenced items.
    pub fn from_users(users: Vec<UserHistory>) -> Self {
        let item_universe = users
            .iter()
            .flat_map(|u| u.items.iter().cloned())
            .collect();
        Self {
            users,
            item_universe,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.users.iter().map(|u| u.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for u in &self.users {
            if u.items.is_empty() {
                return Err(Error::Contract(format!("user {} has no interactions", u.user)));
            }
            if let Some(item) = u.items.iter().find(|i| !self.item_universe.contains(*i)) {
                return Err(Error::Contract(format!(
                    "user {} references item {item} outside the universe",
                    u.user
                )));
            }
        }
        Ok(())
    }

    /// Serializes as JSONL rows `{"user","item","ts"}` with `ts` the position in the history.
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        crate::util::to_jsonl(self.users.iter().flat_map(|u| {
            u.items.iter().enumerate().map(|(ts, item)| InteractionRow {
                user: &u.user,
                item,
                ts: ts as i64,
            })
        }))
    }
}
