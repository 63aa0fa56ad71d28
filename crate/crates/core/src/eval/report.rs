use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{constrained_beam_search, decile_report, head_tail_split, hit_at_k, ndcg_at_k, DecileReport};
use crate::data::{flatten_history, Sample};
use crate::error::{Error, Result};
use crate::model::{Model, Scalar};
use crate::quant::{PrefixTrie, SemanticIdTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Defaults to twice the largest K.
    pub beam_width: Option<usize>,
    pub split: EvalSplit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![5, 10],
            beam_width: None,
            split: EvalSplit::Test,
        }
    }
}

impl EvalConfig {
    pub fn width(&self) -> usize {
        self.beam_width.unwrap_or(2 * self.ks.iter().copied().max().unwrap_or(1))
    }

    pub fn validate(&self) -> Result<()> {
        let max_k = self.ks.iter().copied().max().unwrap_or(0);
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("eval: ks must be a non-empty list of positive cutoffs".into()));
        }
        if self.width() < max_k {
            return Err(Error::Config(format!(
                "eval: beam width {} is below the largest cutoff {max_k}",
                self.width()
            )));
        }
        Ok(())
    }
}

/// Metrics over a subset of test cases.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupReport {
    pub cases: usize,
    pub hit: BTreeMap<String, f64>,
    pub ndcg: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hit: BTreeMap<String, f64>,
    pub ndcg: BTreeMap<String, f64>,
    pub head: GroupReport,
    pub tail: GroupReport,
    pub decile: DecileReport,
    pub cases: usize,
    pub beam_width: usize,
}

fn group(per_case: &[(Vec<f64>, Vec<f64>)], cases: impl Iterator<Item = usize>, ks: &[usize]) -> GroupReport {
    let mut hit = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let mut n = 0;
    for i in cases {
        for j in 0..ks.len() {
            hit[j] += per_case[i].0[j];
            ndcg[j] += per_case[i].1[j];
        }
        n += 1;
    }
    let mean = |v: Vec<f64>| -> BTreeMap<String, f64> {
        ks.iter()
            .zip(v)
            .map(|(k, s)| (k.to_string(), if n == 0 { 0.0 } else { s / n as f64 }))
            .collect()
    };
    GroupReport {
        cases: n,
        hit: mean(hit),
        ndcg: mean(ndcg),
    }
}

/// Ranks every case with constrained beam search and aggregates the metrics.
///
/// Cases are decoded in parallel; results are combined in case order.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    cases: &[Sample],
    ids: &SemanticIdTable,
    trie: &PrefixTrie,
    train_freq: &BTreeMap<String, u64>,
    max_items: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Contract("no evaluation cases".into()));
    }
    let width = cfg.width();
    let ranked: Vec<Result<(Vec<f64>, Vec<f64>, usize)>> = cases
        .par_iter()
        .map(|s| {
            let mut items = s.history.clone();
            items.push(s.target.clone());
            let flat = flatten_history(&items, ids, max_items)?;
            let target = ids.position(&s.target).expect("flatten checked the target");
            let list = constrained_beam_search(model, &flat.x, trie, ids, width)?;
            let hits = cfg.ks.iter().map(|&k| hit_at_k(&list, target, k)).collect();
            let ndcgs = cfg.ks.iter().map(|&k| ndcg_at_k(&list, target, k)).collect();
            Ok((hits, ndcgs, list.entries[0].item))
        })
        .collect();
    let mut per_case = Vec::with_capacity(cases.len());
    let mut top1 = Vec::with_capacity(cases.len());
    for r in ranked {
        let (h, n, best) = r?;
        per_case.push((h, n));
        top1.push(ids.item(best).to_string());
    }
    let overall = group(&per_case, 0..cases.len(), &cfg.ks);
    let ht = head_tail_split(cases, ids.items(), train_freq);
    let targets: Vec<String> = cases.iter().map(|s| s.target.clone()).collect();
    Ok(EvalReport {
        hit: overall.hit,
        ndcg: overall.ndcg,
        head: group(&per_case, ht.head_cases.iter().copied(), &cfg.ks),
        tail: group(&per_case, ht.tail_cases.iter().copied(), &cfg.ks),
        decile: decile_report(&top1, &targets, ids.items(), train_freq)?,
        cases: cases.len(),
        beam_width: width,
    })
}
