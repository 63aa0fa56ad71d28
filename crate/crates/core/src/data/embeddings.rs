use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

const MAGIC: &[u8; 4] = b"TKRC";
const VERSION: u32 = 1;

/// Dense item embeddings, one row of dimension `dim` per item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddingTable {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    item: String,
    vec: Vec<f64>,
}

impl ItemEmbeddingTable {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Contract(format!(
                "{} values for {} items of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of item {}", ids[pos / dim])));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate item id {id}")));
            }
        }
        Ok(Self {
            ids,
            dim,
            data,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Row-major `len() x dim()` block.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn position(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn get(&self, item: &str) -> Option<&[f64]> {
        self.position(item).map(|r| self.row(r))
    }

    /// Keeps the rows whose id satisfies `keep`, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            if keep(id) {
                ids.push(id.clone());
                data.extend_from_slice(self.row(i));
            }
        }
        Self::new(ids, self.dim, data).expect("subset of a valid table is valid")
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        util::to_jsonl((0..self.len()).map(|i| EmbeddingRow {
            item: self.ids[i].clone(),
            vec: self.row(i).to_vec(),
        }))
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| Error::Row {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            match dim {
                None => dim = Some(row.vec.len()),
                Some(d) if d != row.vec.len() => {
                    return Err(Error::Row {
                        line: lineno + 1,
                        msg: format!("dimension {} differs from {d}", row.vec.len()),
                    })
                }
                _ => {}
            }
            ids.push(row.item);
            data.extend(row.vec);
        }
        Self::new(ids, dim.unwrap_or(1), data)
    }

    /// Binary layout: magic `TKRC`, u32 version, u32 N, u32 d, then N*d little-endian f32.
    /// Item ids are not part of the block; see [`ItemEmbeddingTable::write_bin`].
    pub fn to_bin(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Parses the binary block. Rows are named by `ids` when given, otherwise by their
    /// row index.
    pub fn from_bin(bytes: &[u8], ids: Option<Vec<String>>) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("embedding block lacks the TKRC magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported embedding version {version}")));
        }
        let n = word(8) as usize;
        let d = word(12) as usize;
        let expected = 16 + n * d * 4;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "embedding block is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let ids = match ids {
            Some(ids) if ids.len() != n => {
                return Err(Error::Format(format!("{} ids for {n} embedding rows", ids.len())))
            }
            Some(ids) => ids,
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        Self::new(ids, d, data)
    }

    /// Writes the binary block to `path` and the row ids, one per line, to `<path>.ids`.
    pub fn write_bin(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, &self.to_bin())?;
        let mut ids = self.ids.join("\n");
        ids.push('\n');
        util::write_atomic(&ids_path(path), ids.as_bytes())
    }

    pub fn read_bin(path: &Path) -> Result<Self> {
        let bytes = util::read_file(path)?;
        let sidecar = ids_path(path);
        let ids = if sidecar.exists() {
            Some(
                util::read_string(&sidecar)?
                    .lines()
                    .filter(|l| !l.is_empty())
                    .map(str::to_owned)
                    .collect(),
            )
        } else {
            None
        };
        Self::from_bin(&bytes, ids)
    }

    /// Reads either format, chosen by extension (`.jsonl` or anything else as binary).
    pub fn read(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::from_jsonl(&util::read_string(path)?)
        } else {
            Self::read_bin(path)
        }
    }
}

fn ids_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".ids");
    name.into()
}
