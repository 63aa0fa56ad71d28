use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::SemanticIdTable;

pub const DEFAULT_MAX_ITEMS: usize = 20;

/// Layer-offset token vocabulary: code `c` at layer `l` (0-based) is token `l * K + c`,
/// followed by the `pad` and `bos` specials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub layers: usize,
    pub codes: usize,
}

impl TokenVocab {
    pub fn new(layers: usize, codes: usize) -> Self {
        Self { layers, codes }
    }

    pub fn encode(&self, layer: usize, code: u32) -> u32 {
        debug_assert!(layer < self.layers && (code as usize) < self.codes);
        (layer * self.codes) as u32 + code
    }

    pub fn decode(&self, token: u32) -> Option<(usize, u32)> {
        let t = token as usize;
        (t < self.layers * self.codes).then(|| (t / self.codes, (t % self.codes) as u32))
    }

    pub fn pad(&self) -> u32 {
        (self.layers * self.codes) as u32
    }

    pub fn bos(&self) -> u32 {
        self.pad() + 1
    }

    pub fn size(&self) -> usize {
        self.layers * self.codes + 2
    }

    pub fn encode_id(&self, codes: &[u32]) -> Vec<u32> {
        codes
            .iter()
            .enumerate()
            .map(|(layer, &c)| self.encode(layer, c))
            .collect()
    }
}

/// Encoder input `x` and decoder target `y` for one prediction case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatSample {
    pub x: Vec<u32>,
    pub y: Vec<u32>,
}

/// Flattens `items` (history followed by the target as the last element) into tokens.
///
/// Only the most recent `max_items` history items are kept.
pub fn flatten_history(items: &[String], ids: &SemanticIdTable, max_items: usize) -> Result<FlatSample> {
    let Some((target, history)) = items.split_last() else {
        return Err(Error::Contract("cannot flatten an empty item list".into()));
    };
    if history.is_empty() {
        return Err(Error::Contract(
            "history must contain at least one item besides the target".into(),
        ));
    }
    let vocab = ids.vocab();
    let lookup = |item: &String| {
        ids.codes_of(item)
            .ok_or_else(|| Error::Lookup(format!("item {item} has no semantic id")))
    };
    let start = history.len().saturating_sub(max_items.max(1));
    let mut x = Vec::with_capacity((history.len() - start) * vocab.layers);
    for item in &history[start..] {
        x.extend(vocab.encode_id(lookup(item)?));
    }
    let y = vocab.encode_id(lookup(target)?);
    Ok(FlatSample { x, y })
}
