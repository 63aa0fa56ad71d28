//! Desk-scale synthetic worlds: hierarchical item embeddings, Zipf popularity and
//! cluster-sticky user walks.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{InteractionDataset, ItemEmbeddingTable, UserHistory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of items generated (before any 5-core filtering).
    pub n_items: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Children per node at each hierarchy level; leaves = product.
    pub branching: Vec<usize>,
    /// Standard deviation of each level's centroid offset from its parent.
    pub level_scales: Vec<f64>,
    /// Standard deviation of an item around its leaf centroid.
    pub item_noise: f64,
    /// Zipf exponent of item popularity (0 = uniform).
    pub zipf_s: f64,
    pub n_users: usize,
    pub mean_history: f64,
    pub min_history: usize,
    pub max_history: usize,
    /// Probability that the next item is drawn from the current item's leaf cluster.
    pub leaf_affinity: f64,
    /// Probability that the next item is drawn from the current item's top-level cluster.
    pub cluster_affinity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 200,
            dim: 16,
            branching: vec![4, 4],
            level_scales: vec![4.0, 1.0],
            item_noise: 0.25,
            zipf_s: 1.1,
            n_users: 500,
            mean_history: 9.0,
            min_history: 5,
            max_history: 50,
            leaf_affinity: 0.3,
            cluster_affinity: 0.4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synth: {msg}")));
        if self.n_items == 0 || self.dim == 0 || self.n_users == 0 {
            return bad("n_items, dim and n_users must be positive");
        }
        if self.branching.is_empty() || self.branching.contains(&0) {
            return bad("branching must be a non-empty list of positive counts");
        }
        if self.level_scales.len() != self.branching.len() {
            return bad("level_scales needs one entry per branching level");
        }
        if self.level_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || !(self.item_noise.is_finite() && self.item_noise >= 0.0)
        {
            return bad("scales and noise must be finite and non-negative");
        }
        if !(self.zipf_s.is_finite() && self.zipf_s >= 0.0) {
            return bad("zipf_s must be finite and non-negative");
        }
        if self.min_history == 0 || self.max_history < self.min_history {
            return bad("need 0 < min_history <= max_history");
        }
        if !(self.mean_history >= self.min_history as f64) {
            return bad("mean_history must be at least min_history");
        }
        let p = self.leaf_affinity + self.cluster_affinity;
        if self.leaf_affinity < 0.0 || self.cluster_affinity < 0.0 || p > 1.0 {
            return bad("affinities must be non-negative and sum to at most 1");
        }
        Ok(())
    }

    fn num_leaves(&self) -> usize {
        self.branching.iter().product()
    }
}

/// Samples item indices with probability proportional to `(rank + 1)^-s`, where ranks
/// are a seeded random permutation of the items.
#[derive(Debug, Clone)]
pub struct PopularitySampler {
    weights: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl PopularitySampler {
    pub fn new(n: usize, s: f64, rng: &mut impl Rng) -> Self {
        let mut ranks: Vec<usize> = (0..n).collect();
        ranks.shuffle(rng);
        let weights: Vec<f64> = ranks.iter().map(|&r| ((r + 1) as f64).powf(-s)).collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        Self { weights, dist }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

/// Generated embeddings and interactions together with the planted structure.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub embeddings: ItemEmbeddingTable,
    pub dataset: InteractionDataset,
    /// `labels[level][item]`: the item's node index at each hierarchy level.
    pub labels: Vec<Vec<usize>>,
    /// `centroids[level][item]`: the planted centroid of the item's node at that level.
    pub centroids: Vec<Vec<Vec<f64>>>,
    /// Unnormalized popularity weight per item.
    pub popularity: Vec<f64>,
}

pub fn item_name(i: usize) -> String {
    format!("i{i:05}")
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = cfg.branching.len();

    // Node centroids level by level; children of node j are j*b .. (j+1)*b.
    let mut nodes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
    let mut parents = vec![vec![0.0; cfg.dim]];
    for (level, &b) in cfg.branching.iter().enumerate() {
        let offset = gaussian(cfg.level_scales[level]);
        let mut current = Vec::with_capacity(parents.len() * b);
        for parent in &parents {
            for _ in 0..b {
                current.push(parent.iter().map(|p| p + offset(&mut rng)).collect::<Vec<f64>>());
            }
        }
        nodes.push(current.clone());
        parents = current;
    }

    let n_leaves = cfg.num_leaves();
    let leaf_of: Vec<usize> = (0..cfg.n_items).map(|i| i * n_leaves / cfg.n_items).collect();
    let mut labels = vec![vec![0usize; cfg.n_items]; levels];
    let mut centroids = vec![Vec::with_capacity(cfg.n_items); levels];
    for (item, &leaf) in leaf_of.iter().enumerate() {
        let mut span = n_leaves;
        for level in 0..levels {
            span /= cfg.branching[level];
            labels[level][item] = leaf / span;
            centroids[level].push(nodes[level][leaf / span].clone());
        }
    }
    let noise = gaussian(cfg.item_noise);
    let mut data = Vec::with_capacity(cfg.n_items * cfg.dim);
    for &leaf in &leaf_of {
        for &c in &nodes[levels - 1][leaf] {
            data.push(c + noise(&mut rng));
        }
    }
    let ids: Vec<String> = (0..cfg.n_items).map(item_name).collect();
    let embeddings = ItemEmbeddingTable::new(ids.clone(), cfg.dim, data)?;

    let popularity = PopularitySampler::new(cfg.n_items, cfg.zipf_s, &mut rng);
    let weights = popularity.weights().to_vec();
    let group_sampler = |key: &[usize], groups: usize| -> Vec<Option<(Vec<usize>, WeightedIndex<f64>)>> {
        let mut members = vec![Vec::new(); groups];
        for (item, &g) in key.iter().enumerate() {
            members[g].push(item);
        }
        members
            .into_iter()
            .map(|m| {
                if m.is_empty() {
                    return None;
                }
                let w: Vec<f64> = m.iter().map(|&i| weights[i]).collect();
                Some((m, WeightedIndex::new(&w).expect("positive weights")))
            })
            .collect()
    };
    let by_leaf = group_sampler(&leaf_of, n_leaves);
    let by_cluster = group_sampler(&labels[0], cfg.branching[0]);

    let extra = Poisson::new(cfg.mean_history - cfg.min_history as f64).ok();
    let mut users = Vec::with_capacity(cfg.n_users);
    for u in 0..cfg.n_users {
        let len = match &extra {
            Some(p) => cfg.min_history + p.sample(&mut rng) as usize,
            None => cfg.min_history,
        }
        .min(cfg.max_history);
        let mut items = Vec::with_capacity(len);
        let mut current = popularity.sample(&mut rng);
        items.push(current);
        while items.len() < len {
            let mut next = current;
            // a few redraws avoid immediate repeats in tiny groups
            for _ in 0..8 {
                let roll: f64 = rng.random();
                next = if roll < cfg.leaf_affinity {
                    draw(&by_leaf[leaf_of[current]], &mut rng)
                } else if roll < cfg.leaf_affinity + cfg.cluster_affinity {
                    draw(&by_cluster[labels[0][current]], &mut rng)
                } else {
                    popularity.sample(&mut rng)
                };
                if next != current {
                    break;
                }
            }
            items.push(next);
            current = next;
        }
        users.push(UserHistory {
            user: format!("u{u:05}"),
            items: items.into_iter().map(|i| ids[i].clone()).collect(),
        });
    }

    Ok(SyntheticWorld {
        embeddings,
        dataset: InteractionDataset::from_users(users),
        labels,
        centroids,
        popularity: weights,
    })
}

fn draw(group: &Option<(Vec<usize>, WeightedIndex<f64>)>, rng: &mut impl Rng) -> usize {
    let (members, dist) = group.as_ref().expect("current item's group is non-empty");
    members[dist.sample(rng)]
}

fn gaussian(sd: f64) -> impl Fn(&mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
    move |rng| if sd == 0.0 { 0.0 } else { normal.sample(rng) }
}
