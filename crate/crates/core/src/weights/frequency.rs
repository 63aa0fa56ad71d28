use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TokenWeightVector;
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::quant::SemanticIdTable;

pub const DEFAULT_BETA: f64 = 0.99;

/// Occurrence counts keyed by `(layer, code)`, layers 0-based.
pub type TokenCounts = BTreeMap<(usize, u32), u64>;

/// Effective number of samples `(1 - beta^n) / (1 - beta)`.
pub fn effective_number(n: u64, beta: f64) -> f64 {
    // -expm1(n ln beta) keeps 1 - beta^n accurate when beta^n is close to 1
    -((n as f64) * beta.ln()).exp_m1() / (1.0 - beta)
}

/// Counts every `(layer, code)` over the training targets.
pub fn token_frequencies(train: &SplitDataset, ids: &SemanticIdTable) -> Result<TokenCounts> {
    let mut counts = TokenCounts::new();
    for sample in &train.train {
        let codes = ids
            .codes_of(&sample.target)
            .ok_or_else(|| Error::Lookup(format!("item {} has no semantic id", sample.target)))?;
        for (layer, &code) in codes.iter().enumerate() {
            *counts.entry((layer, code)).or_default() += 1;
        }
    }
    Ok(counts)
}

/// Static token counts plus `beta`; resolves per-sequence frequency weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWeightMap {
    pub beta: f64,
    pub counts: TokenCounts,
}

impl FrequencyWeightMap {
    pub fn new(counts: TokenCounts, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self { beta, counts })
    }

    /// Count of a token; tokens never seen in training count once.
    pub fn count(&self, layer: usize, code: u32) -> u64 {
        self.counts.get(&(layer, code)).copied().unwrap_or(1).max(1)
    }

    pub fn raw_weight(&self, layer: usize, code: u32) -> f64 {
        1.0 / effective_number(self.count(layer, code), self.beta)
    }

    pub fn weights_for(&self, codes: &[u32]) -> TokenWeightVector {
        TokenWeightVector::normalized(
            codes
                .iter()
                .enumerate()
                .map(|(layer, &c)| self.raw_weight(layer, c).max(0.0))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use approx::assert_relative_eq;

    fn sample(target: &str) -> Sample {
        Sample {
            user: "u".into(),
            history: vec!["h".into()],
            target: target.into(),
        }
    }

    fn ids() -> SemanticIdTable {
        SemanticIdTable::from_codes(
            vec!["a".into(), "b".into(), "h".into()],
            vec![vec![0, 1, 2, 3], vec![0, 2, 2, 1], vec![1, 1, 1, 1]],
            4,
        )
        .unwrap()
    }

    #[test]
    fn counts_single_and_duplicated_samples() {
        let mut split = SplitDataset {
            train: vec![sample("a")],
            ..Default::default()
        };
        let c = token_frequencies(&split, &ids()).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.values().all(|&n| n == 1));
        split.train.push(sample("a"));
        let c2 = token_frequencies(&split, &ids()).unwrap();
        assert!(c2.values().all(|&n| n == 2));
    }

    #[test]
    fn effective_number_examples() {
        assert_relative_eq!(effective_number(1, 0.99), 1.0, epsilon = 1e-15);
        assert_relative_eq!(effective_number(2, 0.99), 1.99, epsilon = 1e-12);
        assert_relative_eq!(1.0 / effective_number(2, 0.99), 0.502_512_562_8, epsilon = 1e-9);
        assert_relative_eq!(1.0 / effective_number(100_000, 0.99), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn all_singletons_give_uniform_weights() {
        let map = FrequencyWeightMap::new(TokenCounts::new(), 0.99).unwrap();
        assert_eq!(map.weights_for(&[3, 1, 4, 1]), TokenWeightVector::uniform(4));
    }

    #[test]
    fn rare_tokens_weigh_more() {
        let mut counts = TokenCounts::new();
        counts.insert((0, 0), 500);
        counts.insert((1, 0), 3);
        let map = FrequencyWeightMap::new(counts, 0.99).unwrap();
        let w = map.weights_for(&[0, 0]);
        assert!(w[1] > w[0]);
        assert_relative_eq!(w.sum(), 2.0, epsilon = 1e-12);
        for n in 1..2000u64 {
            assert!(1.0 / effective_number(n, 0.99) > 1.0 / effective_number(n + 1, 0.99));
        }
    }

    #[test]
    fn beta_is_validated() {
        assert!(FrequencyWeightMap::new(TokenCounts::new(), 1.0).is_err());
        assert!(FrequencyWeightMap::new(TokenCounts::new(), 0.0).is_err());
    }
}
