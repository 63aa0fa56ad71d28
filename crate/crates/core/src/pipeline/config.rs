use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{SynthConfig, DEFAULT_MAX_ITEMS};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::{ModelConfig, TrainConfig};
use crate::objective::WeightMode;
use crate::quant::{Flavor, DEFAULT_ITERS};
use crate::weights::{FilterAveraging, DEFAULT_BETA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub synth: SynthConfig,
    /// Drop users and items with fewer than five interactions, repeatedly.
    pub five_core: bool,
    /// History items fed to the encoder, most recent kept.
    pub max_items: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            five_core: true,
            max_items: DEFAULT_MAX_ITEMS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub flavor: Flavor,
    pub layers: usize,
    pub codes: usize,
    pub iters: usize,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::Rq,
            layers: 3,
            codes: 16,
            iters: DEFAULT_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    /// Effective-number decay of the frequency weights.
    pub beta: f64,
    pub filter: FilterAveraging,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            filter: FilterAveraging::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub modes: Vec<WeightMode>,
    pub seeds: Vec<u64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            modes: WeightMode::ALL.to_vec(),
            seeds: (0..5).collect(),
        }
    }
}

/// Settings for every command.
///
/// `model.vocab`, `model.max_positions` and `model.target_len` follow from the
/// quantizer and data sections, and `model.seed` / `train.seed` from the top-level seed;
/// [`RunConfig::resolved`] fills them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub quantizer: QuantConfig,
    pub weights: WeightsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            quantizer: QuantConfig::default(),
            weights: WeightsConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a JSON document after applying `key.path=value` overrides to it.
    ///
    /// Override values are parsed as JSON and fall back to plain strings.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text)?
        };
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key.path=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, path, value)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    /// Fills in the derived fields and validates every section.
    pub fn resolved(mut self) -> Result<Self> {
        let q = &self.quantizer;
        if q.layers == 0 || q.codes == 0 || q.iters == 0 {
            return Err(Error::Config("quantizer: layers, codes and iters must be positive".into()));
        }
        if self.data.max_items == 0 {
            return Err(Error::Config("data: max_items must be positive".into()));
        }
        if !(self.weights.beta > 0.0 && self.weights.beta < 1.0) {
            return Err(Error::Config(format!("weights: beta must lie in (0, 1), got {}", self.weights.beta)));
        }
        if self.ablate.modes.is_empty() || self.ablate.seeds.is_empty() {
            return Err(Error::Config("ablate: modes and seeds must be non-empty".into()));
        }
        self.data.synth.validate()?;
        self.model.vocab = q.layers * q.codes + 2;
        self.model.target_len = q.layers;
        self.model.max_positions = self.data.max_items * q.layers;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        Ok(self)
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        Self { seed, ..self.clone() }.resolved()
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {path}: {key} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
