use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::quant::{build_trie, PrefixTrie, SemanticIdTable};

/// `1 - H / H_max` over the positive counts of a group, natural log.
///
/// Groups with fewer than two members are perfectly pure.
pub fn purity(counts: &[u64]) -> f64 {
    let positive: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    if positive.len() < 2 {
        return 1.0;
    }
    let total: f64 = positive.iter().sum();
    let entropy: f64 = positive
        .iter()
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum();
    (1.0 - entropy / (positive.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Per-token purity gains, averaged over every item carrying the token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    /// Keyed `"layer:code"` with 1-based layers.
    pub per_token: BTreeMap<String, f64>,
    pub per_layer_mean: Vec<f64>,
}

impl PurityReport {
    pub fn gain(&self, layer: usize, code: u32) -> Option<f64> {
        self.per_token.get(&token_key(layer, code)).copied()
    }
}

fn token_key(layer: usize, code: u32) -> String {
    format!("{}:{code}", layer + 1)
}

/// Purity of the popularity distribution under each prefix, then the gain each token
/// adds over its parent prefix. Items absent from `item_counts` count zero.
pub fn purity_gain(ids: &SemanticIdTable, item_counts: &BTreeMap<String, u64>) -> PurityReport {
    let trie = build_trie(ids);
    let node_purity = node_purities(&trie, ids, item_counts);
    let layers = ids.layers();
    let mut sums: BTreeMap<(usize, u32), (f64, usize)> = BTreeMap::new();
    for (_, codes) in ids.iter() {
        let mut node = PrefixTrie::ROOT;
        for (layer, &code) in codes.iter().enumerate() {
            let next = trie.child(node, code).expect("trie covers the table");
            let e = sums.entry((layer, code)).or_default();
            e.0 += node_purity[next] - node_purity[node];
            e.1 += 1;
            node = next;
        }
    }
    let mut per_token = BTreeMap::new();
    let mut layer_acc = vec![(0.0, 0usize); layers];
    for ((layer, code), (sum, n)) in sums {
        let g = sum / n as f64;
        per_token.insert(token_key(layer, code), g);
        layer_acc[layer].0 += g;
        layer_acc[layer].1 += 1;
    }
    let per_layer_mean = layer_acc.into_iter().map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 }).collect();
    PurityReport {
        per_token,
        per_layer_mean,
    }
}

fn node_purities(trie: &PrefixTrie, ids: &SemanticIdTable, item_counts: &BTreeMap<String, u64>) -> Vec<f64> {
    // gather the counts beneath each node by walking leaves upward
    let mut beneath: Vec<Vec<u64>> = vec![Vec::new(); trie.node_count()];
    for (item, codes) in ids.iter() {
        let c = item_counts.get(item).copied().unwrap_or(0);
        let mut node = PrefixTrie::ROOT;
        beneath[node].push(c);
        for &code in codes {
            node = trie.child(node, code).expect("trie covers the table");
            beneath[node].push(c);
        }
    }
    beneath.iter().map(|c| purity(c)).collect()
}

/// How a layer's filter ratio averages over its prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterAveraging {
    /// Each child prefix weighted by the items beneath it.
    #[default]
    ItemWeighted,
    /// Plain mean over the child prefixes present at the layer.
    PrefixUniform,
}

/// Fraction of the parent's candidates ruled out by each layer's token,
/// `1 - |child| / |parent|`, averaged per layer.
pub fn layer_filter_ratio(ids: &SemanticIdTable, averaging: FilterAveraging) -> Vec<f64> {
    let trie = build_trie(ids);
    let layers = ids.layers();
    let mut acc = vec![(0.0, 0.0); layers];
    for (depth, parent, node) in trie.edges() {
        let child = trie.count(node) as f64;
        let ratio = 1.0 - child / trie.count(parent) as f64;
        let w = match averaging {
            FilterAveraging::ItemWeighted => child,
            FilterAveraging::PrefixUniform => 1.0,
        };
        acc[depth - 1].0 += w * ratio;
        acc[depth - 1].1 += w;
    }
    acc.into_iter().map(|(s, w)| if w > 0.0 { s / w } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(codes: Vec<Vec<u32>>, k: usize) -> SemanticIdTable {
        let items = (0..codes.len()).map(|i| format!("t{i}")).collect();
        SemanticIdTable::from_codes(items, codes, k).unwrap()
    }

    fn purity_log2(counts: &[u64]) -> f64 {
        let pos: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
        if pos.len() < 2 {
            return 1.0;
        }
        let t: f64 = pos.iter().sum();
        let h: f64 = pos.iter().map(|c| -(c / t) * (c / t).log2()).sum();
        1.0 - h / (pos.len() as f64).log2()
    }

    #[test]
    fn purity_fixtures() {
        assert_relative_eq!(purity(&[5, 5]), 0.0, epsilon = 1e-12);
        assert_relative_eq!(purity(&[3, 1]), 0.1887, epsilon = 1e-3);
        assert_eq!(purity(&[7]), 1.0);
        assert_eq!(purity(&[7, 0]), 1.0);
        for c in [[3u64, 1, 4], [1, 1, 10], [2, 9, 9]] {
            assert_relative_eq!(purity(&c), purity_log2(&c), epsilon = 1e-12);
        }
    }

    #[test]
    fn gains_on_a_two_layer_fixture() {
        // root holds counts {3,1,2,2}; prefix 0 holds {3,1}, prefix 1 holds {2,2}
        let ids = table(vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]], 2);
        let counts: BTreeMap<String, u64> = [("t0", 3), ("t1", 1), ("t2", 2), ("t3", 2)]
            .into_iter()
            .map(|(k, v)| (k.to_owned(), v))
            .collect();
        let r = purity_gain(&ids, &counts);
        let root = purity(&[3, 1, 2, 2]);
        assert_relative_eq!(r.gain(0, 0).unwrap(), purity(&[3, 1]) - root, epsilon = 1e-12);
        assert_relative_eq!(r.gain(0, 1).unwrap(), -root, epsilon = 1e-12);
        // second-layer code 0 is carried by t0 (gain 1 - p{3,1}) and t2 (gain 1 - 0)
        let expect = ((1.0 - purity(&[3, 1])) + 1.0) / 2.0;
        assert_relative_eq!(r.gain(1, 0).unwrap(), expect, epsilon = 1e-12);
        assert!(r.per_token.values().all(|g| (-1.0..=1.0).contains(g)));
    }

    #[test]
    fn filter_ratio_fixture() {
        // 2 items under code 0, 1 under code 1: ratios 1/3 and 2/3
        let ids = table(vec![vec![0, 0], vec![0, 1], vec![1, 0]], 2);
        let weighted = layer_filter_ratio(&ids, FilterAveraging::ItemWeighted);
        assert_relative_eq!(weighted[0], (2.0 * (1.0 / 3.0) + 2.0 / 3.0) / 3.0, epsilon = 1e-12);
        // second layer: two children of a 2-item node (1/2 each) and one only child (0)
        assert_relative_eq!(weighted[1], 1.0 / 3.0, epsilon = 1e-12);
        let uniform = layer_filter_ratio(&ids, FilterAveraging::PrefixUniform);
        assert_relative_eq!(uniform[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(uniform[1], 1.0 / 3.0, epsilon = 1e-12);
    }
}
