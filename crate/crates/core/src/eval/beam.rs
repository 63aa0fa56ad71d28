use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Scalar};
use crate::objective::log_softmax;
use crate::quant::{NodeId, PrefixTrie, SemanticIdTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    /// Row of the item in the semantic ID table.
    pub item: usize,
    pub codes: Vec<u32>,
    /// Sum of per-token log-probabilities, in nats.
    pub logprob: f64,
}

/// Complete item IDs, best first. Equal scores are ordered by code sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedItem>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of `item`, if present.
    pub fn rank_of(&self, item: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.item == item).map(|p| p + 1)
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.item)
    }
}

struct Hyp {
    node: NodeId,
    codes: Vec<u32>,
    tokens: Vec<u32>,
    score: f64,
}

fn better(a_score: f64, a_codes: &[u32], b_score: f64, b_codes: &[u32]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_codes.cmp(b_codes))
}

/// Beam search over the `L` code positions, expanding only children present in `trie`.
///
/// Token scores are the model's full-vocabulary log-softmax, so a finished hypothesis
/// carries the model's log-probability of that ID. Returns up to `width` items.
pub fn constrained_beam_search<T: Scalar>(
    model: &Model<T>,
    x: &[u32],
    trie: &PrefixTrie,
    ids: &SemanticIdTable,
    width: usize,
) -> Result<RankedList> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    if trie.children(PrefixTrie::ROOT).is_empty() {
        return Err(Error::Contract("cannot decode against an empty trie".into()));
    }
    let vocab = ids.vocab();
    if vocab.size() != model.vocab() {
        return Err(Error::Contract(format!(
            "model vocabulary {} does not match the ID table's {}",
            model.vocab(),
            vocab.size()
        )));
    }
    let memory = model.encode(x)?;
    let mut beams = vec![Hyp {
        node: PrefixTrie::ROOT,
        codes: Vec::new(),
        tokens: vec![vocab.bos()],
        score: 0.0,
    }];
    for layer in 0..trie.depth() {
        let mut next = Vec::new();
        for h in &beams {
            let logits: Vec<f64> = model.next_logits(&memory, &h.tokens).iter().map(|v| v.f64()).collect();
            let lp = log_softmax(&logits);
            for &(code, child) in trie.children(h.node) {
                let tok = vocab.encode(layer, code);
                let mut codes = h.codes.clone();
                codes.push(code);
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                next.push(Hyp {
                    node: child,
                    codes,
                    tokens,
                    score: h.score + lp[tok as usize],
                });
            }
        }
        next.sort_by(|a, b| better(a.score, &a.codes, b.score, &b.codes));
        next.truncate(width);
        beams = next;
    }
    let entries = beams
        .into_iter()
        .map(|h| RankedItem {
            item: trie.item(h.node).expect("depth-L nodes are leaves"),
            codes: h.codes,
            logprob: h.score,
        })
        .collect();
    Ok(RankedList { entries })
}
