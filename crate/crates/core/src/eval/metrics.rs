use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RankedList;
use crate::data::Sample;
use crate::error::{Error, Result};

pub fn hit_at_k(ranked: &RankedList, target: usize, k: usize) -> f64 {
    match ranked.rank_of(target) {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// NDCG with a single relevant item: `1 / log2(rank + 1)` inside the top `k`.
pub fn ndcg_at_k(ranked: &RankedList, target: usize, k: usize) -> f64 {
    match ranked.rank_of(target) {
        Some(r) if r <= k => 1.0 / ((r + 1) as f64).log2(),
        _ => 0.0,
    }
}

/// `items` ordered by training count, most frequent first; ties by item id.
pub fn frequency_ranking<'a>(items: &'a [String], train_freq: &BTreeMap<String, u64>) -> Vec<&'a str> {
    let mut ranked: Vec<&str> = items.iter().map(String::as_str).collect();
    ranked.sort_by(|a, b| {
        let fa = train_freq.get(*a).copied().unwrap_or(0);
        let fb = train_freq.get(*b).copied().unwrap_or(0);
        fb.cmp(&fa).then_with(|| a.cmp(b))
    });
    ranked.dedup();
    ranked
}

/// Item halves and the test cases that fall in each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadTail {
    pub head_items: BTreeSet<String>,
    pub tail_items: BTreeSet<String>,
    /// Indices into the test cases.
    pub head_cases: Vec<usize>,
    pub tail_cases: Vec<usize>,
}

/// The more frequent `⌊N/2⌋` catalogue items form the head, the rest the tail; each
/// test case follows its target item.
pub fn head_tail_split(test: &[Sample], items: &[String], train_freq: &BTreeMap<String, u64>) -> HeadTail {
    let ranked = frequency_ranking(items, train_freq);
    let half = ranked.len() / 2;
    let head_items: BTreeSet<String> = ranked[..half].iter().map(|s| s.to_string()).collect();
    let tail_items: BTreeSet<String> = ranked[half..].iter().map(|s| s.to_string()).collect();
    let (head_cases, tail_cases) = (0..test.len()).partition(|&i| head_items.contains(&test[i].target));
    HeadTail {
        head_items,
        tail_items,
        head_cases,
        tail_cases,
    }
}

/// Where ground-truth and predicted items fall among the ten popularity deciles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileReport {
    /// Bin 0 holds the most frequent tenth of the catalogue.
    pub truth: Vec<u64>,
    pub pred: Vec<u64>,
    /// L1 distance between the two histograms after normalizing each to sum 1.
    pub l1: f64,
}

/// Bins `targets` and top-1 `predictions` by the decile of their training-frequency rank.
pub fn decile_report(
    predictions: &[String],
    targets: &[String],
    items: &[String],
    train_freq: &BTreeMap<String, u64>,
) -> Result<DecileReport> {
    let ranked = frequency_ranking(items, train_freq);
    let n = ranked.len();
    if n < 10 {
        return Err(Error::Contract(format!("decile report needs at least 10 items, catalogue has {n}")));
    }
    let decile: BTreeMap<&str, usize> = ranked.iter().enumerate().map(|(r, &it)| (it, r * 10 / n)).collect();
    let hist = |list: &[String]| -> Result<Vec<u64>> {
        let mut h = vec![0u64; 10];
        for it in list {
            let d = decile
                .get(it.as_str())
                .ok_or_else(|| Error::Lookup(format!("item {it} is not in the catalogue")))?;
            h[*d] += 1;
        }
        Ok(h)
    };
    let truth = hist(targets)?;
    let pred = hist(predictions)?;
    let norm = |h: &[u64]| {
        let s: u64 = h.iter().sum();
        h.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect::<Vec<f64>>()
    };
    let l1 = norm(&truth).iter().zip(norm(&pred)).map(|(a, b)| (a - b).abs()).sum();
    Ok(DecileReport { truth, pred, l1 })
}
