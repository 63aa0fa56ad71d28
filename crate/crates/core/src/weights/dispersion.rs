use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TokenWeightVector;
use crate::data::ItemEmbeddingTable;
use crate::error::{Error, Result};
use crate::quant::SemanticIdTable;

/// Expected within-group dispersion `mu[k]` for prefix lengths `k = 0..=L` and the
/// per-token reductions `delta[k-1] = mu[k-1] - mu[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionProfile {
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Mean squared distance of the rows to their centroid.
pub fn dispersion(emb: &ItemEmbeddingTable, group: &[usize]) -> f64 {
    assert!(!group.is_empty(), "dispersion of an empty group");
    sum_sq_to_centroid(emb, group) / group.len() as f64
}

fn sum_sq_to_centroid(emb: &ItemEmbeddingTable, group: &[usize]) -> f64 {
    let d = emb.dim();
    let mut centroid = vec![0.0; d];
    for &i in group {
        for (c, v) in centroid.iter_mut().zip(emb.row(i)) {
            *c += v;
        }
    }
    let inv = 1.0 / group.len() as f64;
    centroid.iter_mut().for_each(|c| *c *= inv);
    group
        .iter()
        .map(|&i| {
            emb.row(i)
                .iter()
                .zip(&centroid)
                .map(|(v, c)| (v - c) * (v - c))
                .sum::<f64>()
        })
        .sum()
}

/// Groups items by their length-k prefixes and averages group dispersion over a
/// uniformly drawn item, i.e. each group's dispersion weighted by `|G| / N`.
pub fn dispersion_profile(ids: &SemanticIdTable, emb: &ItemEmbeddingTable) -> Result<DispersionProfile> {
    if ids.is_empty() {
        return Err(Error::Contract("dispersion profile of an empty id table".into()));
    }
    let rows: Vec<usize> = ids
        .items()
        .iter()
        .map(|item| {
            emb.position(item)
                .ok_or_else(|| Error::Lookup(format!("item {item} has no embedding")))
        })
        .collect::<Result<_>>()?;
    let n = ids.len() as f64;
    let layers = ids.layers();
    let mut mu = Vec::with_capacity(layers + 1);
    for k in 0..=layers {
        // sorted prefixes give a fixed summation order
        let mut groups: BTreeMap<&[u32], Vec<usize>> = BTreeMap::new();
        for (idx, &row) in rows.iter().enumerate() {
            groups.entry(&ids.codes(idx)[..k]).or_default().push(row);
        }
        let total: f64 = groups.values().map(|g| sum_sq_to_centroid(emb, g)).sum();
        mu.push(total / n);
    }
    let delta = mu.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(DispersionProfile { mu, delta })
}

/// Clamps negative reductions to zero and normalizes to sum `L`.
pub fn front_greater_weights(profile: &DispersionProfile) -> TokenWeightVector {
    TokenWeightVector::normalized(profile.delta.iter().map(|d| d.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn emb(rows: &[&[f64]]) -> ItemEmbeddingTable {
        ItemEmbeddingTable::new(
            (0..rows.len()).map(|i| format!("p{i}")).collect(),
            rows[0].len(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    fn profile(delta: Vec<f64>) -> DispersionProfile {
        DispersionProfile { mu: vec![], delta }
    }

    #[test]
    fn dispersion_basics() {
        let e = emb(&[&[0.0, 0.0], &[2.0, 0.0], &[5.0, 5.0]]);
        assert_eq!(dispersion(&e, &[2]), 0.0);
        assert_relative_eq!(dispersion(&e, &[0, 1]), 1.0);
        let shifted = emb(&[&[10.0, -3.0], &[12.0, -3.0]]);
        assert_relative_eq!(dispersion(&shifted, &[0, 1]), 1.0);
    }

    #[test]
    fn front_greater_examples() {
        let w = front_greater_weights(&profile(vec![2.0, 0.0, 1.0, 0.0]));
        assert_relative_eq!(w[0], 8.0 / 3.0, epsilon = 1e-12);
        assert_eq!(w[1], 0.0);
        assert_relative_eq!(w[2], 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(w[3], 0.0);
        assert_eq!(front_greater_weights(&profile(vec![0.7; 4])), TokenWeightVector::uniform(4));
        assert_eq!(front_greater_weights(&profile(vec![0.0; 4])), TokenWeightVector::uniform(4));
        assert_eq!(front_greater_weights(&profile(vec![-1.0, -2.0])), TokenWeightVector::uniform(2));
    }

    #[test]
    fn distinct_leaves_have_zero_final_dispersion() {
        let e = emb(&[&[0.0], &[1.0], &[4.0]]);
        let ids = SemanticIdTable::from_codes(
            vec!["p0".into(), "p1".into(), "p2".into()],
            vec![vec![0, 0], vec![0, 1], vec![1, 0]],
            2,
        )
        .unwrap();
        let p = dispersion_profile(&ids, &e).unwrap();
        assert_eq!(p.mu.len(), 3);
        assert_eq!(p.mu[2], 0.0);
    }

    #[test]
    fn two_tight_pairs_split_at_first_layer() {
        // pairs around (0,0) and (10,0), each with half-width 0.1
        let e = emb(&[&[-0.1, 0.0], &[0.1, 0.0], &[9.9, 0.0], &[10.1, 0.0]]);
        let ids = SemanticIdTable::from_codes(
            (0..4).map(|i| format!("p{i}")).collect(),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            2,
        )
        .unwrap();
        let p = dispersion_profile(&ids, &e).unwrap();
        // brute force: total variance about the global mean vs pooled within-pair variance
        let rows = [[-0.1, 0.0], [0.1, 0.0], [9.9, 0.0], [10.1, 0.0]];
        let mean_x = rows.iter().map(|r| r[0]).sum::<f64>() / 4.0;
        let total = rows.iter().map(|r| (r[0] - mean_x).powi(2)).sum::<f64>() / 4.0;
        let within = [(-0.1f64, 0.1f64), (9.9, 10.1)]
            .iter()
            .map(|(a, b)| {
                let m = (a + b) / 2.0;
                (a - m).powi(2) + (b - m).powi(2)
            })
            .sum::<f64>()
            / 4.0;
        let between = total - within;
        assert_relative_eq!(p.delta[0], between, epsilon = 1e-12);
        assert_relative_eq!(between, 25.0, epsilon = 1e-12);
        assert_relative_eq!(p.delta[1], within, epsilon = 1e-12);
    }

    #[test]
    fn scaling_deltas_keeps_weights() {
        let base = vec![3.0, 1.5, 0.25, -0.1];
        let a = front_greater_weights(&profile(base.clone()));
        let b = front_greater_weights(&profile(base.iter().map(|d| d * 17.5).collect()));
        for i in 0..4 {
            assert_relative_eq!(a[i], b[i], epsilon = 1e-12);
        }
    }
}
