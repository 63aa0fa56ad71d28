use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CodebookSet;
use crate::data::{ItemEmbeddingTable, TokenVocab};
use crate::error::{Error, Result};
use crate::util;

/// Bijective map between items and their length-L code sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticIdTable {
    items: Vec<String>,
    codes: Vec<Vec<u32>>,
    codebook_size: usize,
    index: HashMap<String, usize>,
    reverse: HashMap<Vec<u32>, usize>,
}

#[derive(Serialize, Deserialize)]
struct IdRow {
    item: String,
    codes: Vec<u32>,
}

impl SemanticIdTable {
    pub fn from_codes(items: Vec<String>, codes: Vec<Vec<u32>>, codebook_size: usize) -> Result<Self> {
        if items.len() != codes.len() {
            return Err(Error::Contract(format!("{} items but {} code sequences", items.len(), codes.len())));
        }
        let layers = codes.first().map_or(0, Vec::len);
        let mut index = HashMap::with_capacity(items.len());
        let mut reverse = HashMap::with_capacity(items.len());
        for (i, (item, c)) in items.iter().zip(&codes).enumerate() {
            if c.len() != layers || layers == 0 {
                return Err(Error::Contract(format!("item {item} has an id of length {}", c.len())));
            }
            if let Some(bad) = c.iter().find(|&&x| x as usize >= codebook_size) {
                return Err(Error::Contract(format!("item {item} uses code {bad} >= {codebook_size}")));
            }
            if index.insert(item.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate item {item}")));
            }
            if let Some(other) = reverse.insert(c.clone(), i) {
                return Err(Error::Contract(format!(
                    "items {} and {item} share the id {c:?}",
                    items[other]
                )));
            }
        }
        Ok(Self {
            items,
            codes,
            codebook_size,
            index,
            reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn vocab(&self) -> TokenVocab {
        TokenVocab::new(self.layers(), self.codebook_size)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn codes(&self, idx: usize) -> &[u32] {
        &self.codes[idx]
    }

    pub fn position(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn codes_of(&self, item: &str) -> Option<&[u32]> {
        self.position(item).map(|i| self.codes[i].as_slice())
    }

    pub fn item_of(&self, codes: &[u32]) -> Option<usize> {
        self.reverse.get(codes).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u32])> {
        self.items.iter().map(String::as_str).zip(self.codes.iter().map(Vec::as_slice))
    }

    /// JSONL rows `{"item": str, "codes": [int...]}`.
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        util::to_jsonl(self.iter().map(|(item, codes)| IdRow {
            item: item.to_owned(),
            codes: codes.to_vec(),
        }))
    }

    pub fn from_jsonl(text: &str, codebook_size: usize) -> Result<Self> {
        let mut items = Vec::new();
        let mut codes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: IdRow = serde_json::from_str(line).map_err(|e| Error::Row {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            items.push(row.item);
            codes.push(row.codes);
        }
        Self::from_codes(items, codes, codebook_size)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, &self.to_jsonl()?)
    }

    pub fn read(path: &Path, codebook_size: usize) -> Result<Self> {
        Self::from_jsonl(&util::read_string(path)?, codebook_size)
    }
}

/// Nearest-centroid ids for every embedded item, with duplicates made unique.
///
/// When several items land on one full id, the first (in table order) keeps it and the
/// others re-draw their final code uniformly from the codes still unused under the
/// shared length-(L-1) prefix. The draw is seeded from the codebook seed.
pub fn assign_ids(emb: &ItemEmbeddingTable, codebooks: &CodebookSet) -> Result<SemanticIdTable> {
    if emb.dim() != codebooks.dim {
        return Err(Error::Contract(format!(
            "embedding dimension {} differs from codebook dimension {}",
            emb.dim(),
            codebooks.dim
        )));
    }
    let mut codes: Vec<Vec<u32>> = (0..emb.len()).map(|i| codebooks.encode(emb.row(i))).collect();
    resolve_collisions(&mut codes, codebooks.codes, codebooks.seed)?;
    SemanticIdTable::from_codes(emb.ids().to_vec(), codes, codebooks.codes)
}

pub(crate) fn resolve_collisions(codes: &mut [Vec<u32>], codebook_size: usize, seed: u64) -> Result<()> {
    let mut used: BTreeMap<Vec<u32>, BTreeSet<u32>> = BTreeMap::new();
    let mut redraw = Vec::new();
    for (i, c) in codes.iter().enumerate() {
        let (prefix, last) = c.split_at(c.len() - 1);
        if !used.entry(prefix.to_vec()).or_default().insert(last[0]) {
            redraw.push(i);
        }
    }
    if redraw.is_empty() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for i in redraw {
        let last = codes[i].len() - 1;
        let prefix = codes[i][..last].to_vec();
        let taken = used.get_mut(&prefix).expect("prefix registered above");
        let free: Vec<u32> = (0..codebook_size as u32).filter(|c| !taken.contains(c)).collect();
        if free.is_empty() {
            return Err(Error::CollisionOverflow {
                prefix,
                capacity: codebook_size,
            });
        }
        let pick = free[rng.random_range(0..free.len())];
        taken.insert(pick);
        codes[i][last] = pick;
    }
    Ok(())
}
