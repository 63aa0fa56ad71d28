use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::train::{TrainConfig, TrainState};
use super::{Model, ModelConfig, ParamSet, Precision, Scalar};
use crate::error::{Error, Result};
use crate::objective::CurriculumState;
use crate::util;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_FILE: &str = "tensors.bin";
const FORMAT: &str = "tokweight-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Everything in a checkpoint except the tensor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub curriculum: CurriculumState,
    pub theta_m: [f64; 3],
    pub theta_v: [f64; 3],
    /// Batch order and dropout draws are pure functions of `(seed, step)`, so this pair
    /// is the full RNG state.
    pub rng: RngState,
    /// Parameter tensors; the tensor file stores them, then the optimizer's first
    /// moments, then its second moments, in this order.
    pub tensors: Vec<TensorEntry>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub step: u64,
}

pub fn save_checkpoint<T: Scalar>(dir: &Path, model: &Model<T>, state: &TrainState<T>, train: &TrainConfig) -> Result<()> {
    let p = &model.params;
    let mut bin = Vec::with_capacity(3 * p.count() * T::BYTES);
    for set in [p, &state.adam.m, &state.adam.v] {
        for t in &set.data {
            for &x in t {
                x.write_le(&mut bin);
            }
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        precision: T::PRECISION,
        model: model.cfg.clone(),
        train: train.clone(),
        step: state.step,
        curriculum: state.curriculum.clone(),
        theta_m: state.theta_m,
        theta_v: state.theta_v,
        rng: RngState {
            seed: train.seed,
            step: state.step,
        },
        tensors: p
            .names
            .iter()
            .zip(&p.shapes)
            .map(|(n, s)| TensorEntry {
                name: n.clone(),
                shape: s.clone(),
            })
            .collect(),
        sha256: util::sha256_hex(&bin),
    };
    // tensors first: a manifest on disk always points at a complete tensor file
    util::write_atomic(&dir.join(TENSOR_FILE), &bin)?;
    util::write_atomic(&dir.join(MANIFEST_FILE), &util::to_pretty_json(&manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            producer: "tokweight train".into(),
        });
    }
    let m: Manifest = serde_json::from_str(&util::read_string(&path)?)?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Format(format!(
            "{} is not a version-{VERSION} checkpoint manifest",
            path.display()
        )));
    }
    Ok(m)
}

/// Loads and verifies a checkpoint written with element type `T`.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(Model<T>, TrainState<T>, Manifest)> {
    let m = read_manifest(dir)?;
    if m.precision != T::PRECISION {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, requested {}",
            m.precision.as_str(),
            T::PRECISION.as_str()
        )));
    }
    let path = dir.join(TENSOR_FILE);
    let bin = util::read_file(&path)?;
    let found = util::sha256_hex(&bin);
    if found != m.sha256 {
        return Err(Error::Checksum {
            path,
            expected: m.sha256.clone(),
            found,
        });
    }
    let sizes: Vec<usize> = m.tensors.iter().map(|t| t.shape.iter().product()).collect();
    let total: usize = sizes.iter().sum();
    if bin.len() != 3 * total * T::BYTES {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bin.len(),
            3 * total * T::BYTES
        )));
    }
    let mut chunks = bin.chunks_exact(T::BYTES).map(T::read_le);
    let mut read_set = || ParamSet {
        names: m.tensors.iter().map(|t| t.name.clone()).collect(),
        shapes: m.tensors.iter().map(|t| t.shape.clone()).collect(),
        data: sizes.iter().map(|&n| chunks.by_ref().take(n).collect()).collect(),
    };
    let params = read_set();
    let adam = AdamW {
        m: read_set(),
        v: read_set(),
    };
    let model = Model::from_params(&m.model, params)?;
    let state = TrainState {
        step: m.step,
        curriculum: m.curriculum.clone(),
        adam,
        theta_m: m.theta_m,
        theta_v: m.theta_v,
    };
    Ok((model, state, m))
}
