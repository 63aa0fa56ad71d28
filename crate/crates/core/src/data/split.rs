use std::collections::BTreeMap;

use super::InteractionDataset;

/// A next-item prediction case: `history` (oldest first) predicts `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub user: String,
    pub history: Vec<String>,
    pub target: String,
}

/// Leave-one-out split.
///
/// `train` holds one sample per training-prefix position (every prefix of the training
/// portion predicts its next item). Users with fewer than three interactions only
/// contribute training samples and are counted in `excluded_users`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Per-user training portions (everything before the validation item).
    pub train_sequences: Vec<(String, Vec<String>)>,
    pub excluded_users: usize,
}

impl SplitDataset {
    /// Interaction counts over the training portions only.
    pub fn train_item_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for (_, items) in &self.train_sequences {
            for item in items {
                *counts.entry(item.clone()).or_default() += 1;
            }
        }
        counts
    }
}

pub fn leave_one_out_split(ds: &InteractionDataset) -> SplitDataset {
    let mut split = SplitDataset::default();
    for u in &ds.users {
        let n = u.items.len();
        let train_len = if n < 3 {
            split.excluded_users += 1;
            n
        } else {
            split.test.push(Sample {
                user: u.user.clone(),
                history: u.items[..n - 1].to_vec(),
                target: u.items[n - 1].clone(),
            });
            split.valid.push(Sample {
                user: u.user.clone(),
                history: u.items[..n - 2].to_vec(),
                target: u.items[n - 2].clone(),
            });
            n - 2
        };
        let portion = &u.items[..train_len];
        for end in 1..portion.len() {
            split.train.push(Sample {
                user: u.user.clone(),
                history: portion[..end].to_vec(),
                target: portion[end].clone(),
            });
        }
        split.train_sequences.push((u.user.clone(), portion.to_vec()));
    }
    if split.excluded_users > 0 {
        log::warn!(
            "{} users with fewer than 3 interactions excluded from valid/test",
            split.excluded_users
        );
    }
    split
}
