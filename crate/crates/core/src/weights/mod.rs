//! Token weights and the prefix diagnostics they are built from.
//!
//! Front-greater weights follow the drop in expected within-group dispersion as ID
//! prefixes grow; frequency weights follow the inverse effective number of samples of
//! each token. Both are normalized so a sequence of `L` tokens carries total weight `L`.

mod diagnostics;
mod dispersion;
mod frequency;

pub use diagnostics::{layer_filter_ratio, purity, purity_gain, FilterAveraging, PurityReport};
pub use dispersion::{dispersion, dispersion_profile, front_greater_weights, DispersionProfile};
pub use frequency::{effective_number, token_frequencies, FrequencyWeightMap, TokenCounts, DEFAULT_BETA};

use serde::{Deserialize, Serialize};

/// Per-position weights of one semantic ID; non-negative and summing to its length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenWeightVector(Vec<f64>);

impl TokenWeightVector {
    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    /// Scales non-negative raw weights to sum to their count; all-zero input falls back
    /// to uniform weights.
    pub fn normalized(raw: Vec<f64>) -> Self {
        debug_assert!(raw.iter().all(|w| *w >= 0.0));
        let len = raw.len();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Self::uniform(len);
        }
        let scale = len as f64 / total;
        Self(raw.into_iter().map(|w| w * scale).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for TokenWeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
