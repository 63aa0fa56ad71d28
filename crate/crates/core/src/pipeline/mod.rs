//! The commands behind the CLI.
//!
//! Each command writes into `<out>/<stage>-<hash>/`, where the hash covers the
//! upstream directory name and the config fields the stage depends on, so changing a
//! setting never overwrites an earlier result. Every stage directory holds the
//! effective config as `config.json`, written last; its presence marks a finished
//! stage.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{AblateConfig, DataConfig, QuantConfig, RunConfig, WeightsConfig};

use crate::data::{
    apply_five_core, generate_synthetic, ingest_interactions, leave_one_out_split, InteractionDataset, InteractionFormat,
    ItemEmbeddingTable, SplitDataset,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{
    load_checkpoint, prepare_examples, read_manifest, save_checkpoint, train_steps, Model, Precision, Scalar, StepLog,
    TrainData, TrainState,
};
use crate::objective::WeightMode;
use crate::quant::{assign_ids, build_trie, fit_traced, reconstruction_error, CodebookSet, SemanticIdTable};
use crate::util;
use crate::weights::{
    dispersion_profile, front_greater_weights, layer_filter_ratio, purity_gain, token_frequencies, FrequencyWeightMap,
    TokenWeightVector,
};

pub const CONFIG_FILE: &str = "config.json";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const CODEBOOKS_FILE: &str = "codebooks.bin";
pub const IDS_FILE: &str = "ids.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOG_FILE: &str = "log.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.json";

/// Explicit upstream directories; unset entries are derived from the config.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub data: Option<PathBuf>,
    pub quant: Option<PathBuf>,
    pub train: Option<PathBuf>,
}

fn stage_dir(out: &Path, stage: &str, key: serde_json::Value) -> PathBuf {
    let hash = util::sha256_hex(key.to_string().as_bytes());
    out.join(format!("{stage}-{}", &hash[..12]))
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_complete(dir: &Path) -> bool {
    dir.join(CONFIG_FILE).exists()
}

fn finish(dir: &Path, cfg: &RunConfig) -> Result<()> {
    util::write_atomic(&dir.join(CONFIG_FILE), &util::to_pretty_json(cfg)?)
}

fn require(dir: &Path, producer: &str) -> Result<()> {
    if is_complete(dir) {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: dir.to_path_buf(),
            producer: producer.into(),
        })
    }
}

pub fn data_dir(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> PathBuf {
    inputs
        .data
        .clone()
        .unwrap_or_else(|| stage_dir(out, "data", json!([cfg.seed, cfg.data])))
}

pub fn quant_dir(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> PathBuf {
    inputs.quant.clone().unwrap_or_else(|| {
        let data = dir_name(&data_dir(cfg, out, inputs));
        stage_dir(out, "quant", json!([data, cfg.seed, cfg.quantizer]))
    })
}

pub fn analyze_dir(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> PathBuf {
    let quant = dir_name(&quant_dir(cfg, out, inputs));
    stage_dir(out, "analyze", json!([quant, cfg.weights]))
}

pub fn train_dir(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> PathBuf {
    inputs.train.clone().unwrap_or_else(|| {
        let quant = dir_name(&quant_dir(cfg, out, inputs));
        stage_dir(
            out,
            "train",
            json!([quant, cfg.seed, cfg.data.max_items, cfg.weights.beta, cfg.model, cfg.train]),
        )
    })
}

pub fn eval_dir(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> PathBuf {
    let train = dir_name(&train_dir(cfg, out, inputs));
    stage_dir(out, "eval", json!([train, cfg.eval]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub train_samples: usize,
    pub test_cases: usize,
    pub excluded_users: usize,
}

fn write_dataset(dir: &Path, cfg: &RunConfig, ds: InteractionDataset, emb: &ItemEmbeddingTable) -> Result<()> {
    let ds = if cfg.data.five_core { apply_five_core(&ds) } else { ds };
    if ds.is_empty() {
        return Err(Error::Contract("no interactions left after filtering".into()));
    }
    let missing: Vec<&String> = ds.item_universe.iter().filter(|i| emb.position(i).is_none()).collect();
    if let Some(first) = missing.first() {
        return Err(Error::Lookup(format!("{} items lack embeddings, e.g. {first}", missing.len())));
    }
    let emb = emb.retain(|id| ds.item_universe.contains(id));
    let split = leave_one_out_split(&ds);
    let summary = DataSummary {
        users: ds.num_users(),
        items: emb.len(),
        interactions: ds.num_interactions(),
        train_samples: split.train.len(),
        test_cases: split.test.len(),
        excluded_users: split.excluded_users,
    };
    util::write_atomic(&dir.join(INTERACTIONS_FILE), &ds.to_jsonl()?)?;
    emb.write_bin(&dir.join(EMBEDDINGS_FILE))?;
    util::write_atomic(&dir.join("summary.json"), &util::to_pretty_json(&summary)?)?;
    finish(dir, cfg)
}

/// Generates a synthetic world and writes it as a dataset directory.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let dir = data_dir(cfg, out, &Inputs::default());
    if is_complete(&dir) {
        return Ok(dir);
    }
    let world = generate_synthetic(&cfg.data.synth, cfg.seed)?;
    write_dataset(&dir, cfg, world.dataset, &world.embeddings)?;
    Ok(dir)
}

/// Imports an interaction file (CSV or JSON lines) and an embedding table.
pub fn cmd_ingest(cfg: &RunConfig, interactions: &Path, embeddings: &Path, out: &Path) -> Result<PathBuf> {
    let format = InteractionFormat::from_path(interactions).ok_or_else(|| {
        Error::Config(format!(
            "{}: expected a .csv, .jsonl or .json interaction file",
            interactions.display()
        ))
    })?;
    let key = json!([
        util::sha256_hex(&util::read_file(interactions)?),
        util::sha256_hex(&util::read_file(embeddings)?),
        cfg.data.five_core
    ]);
    let dir = stage_dir(out, "data", key);
    let ds = ingest_interactions(interactions, format)?;
    let emb = ItemEmbeddingTable::read(embeddings)?;
    write_dataset(&dir, cfg, ds, &emb)?;
    Ok(dir)
}

/// A dataset directory loaded back into memory.
pub struct LoadedData {
    pub dataset: InteractionDataset,
    pub embeddings: ItemEmbeddingTable,
    pub split: SplitDataset,
}

pub fn load_data(dir: &Path) -> Result<LoadedData> {
    require(dir, "tokweight synth` or `tokweight ingest")?;
    let dataset = ingest_interactions(&dir.join(INTERACTIONS_FILE), InteractionFormat::Jsonl)?;
    let embeddings = ItemEmbeddingTable::read_bin(&dir.join(EMBEDDINGS_FILE))?;
    let split = leave_one_out_split(&dataset);
    Ok(LoadedData {
        dataset,
        embeddings,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSummary {
    pub items: usize,
    pub reconstruction_mse: f64,
    /// Final k-means inertia per layer.
    pub inertia: Vec<f64>,
}

/// Fits codebooks on the dataset's embeddings and assigns semantic IDs.
pub fn cmd_quantize(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> Result<PathBuf> {
    let dir = quant_dir(cfg, out, inputs);
    if is_complete(&dir) {
        return Ok(dir);
    }
    let data = load_data(&data_dir(cfg, out, inputs))?;
    let q = &cfg.quantizer;
    let (codebooks, trace) = fit_traced(q.flavor, &data.embeddings, q.layers, q.codes, q.iters, cfg.seed)?;
    let ids = assign_ids(&data.embeddings, &codebooks)?;
    let summary = QuantSummary {
        items: ids.len(),
        reconstruction_mse: reconstruction_error(&data.embeddings, &codebooks, &ids)?,
        inertia: trace.inertia.iter().map(|l| l.last().copied().unwrap_or(0.0)).collect(),
    };
    codebooks.write(&dir.join(CODEBOOKS_FILE))?;
    ids.write(&dir.join(IDS_FILE))?;
    util::write_atomic(&dir.join("summary.json"), &util::to_pretty_json(&summary)?)?;
    finish(&dir, cfg)?;
    Ok(dir)
}

pub fn load_ids(dir: &Path) -> Result<(CodebookSet, SemanticIdTable)> {
    require(dir, "tokweight quantize")?;
    let codebooks = CodebookSet::read(&dir.join(CODEBOOKS_FILE))?;
    let ids = SemanticIdTable::read(&dir.join(IDS_FILE), codebooks.codes)?;
    Ok((codebooks, ids))
}

/// Purity gain, filter ratio and dispersion reports for the current IDs.
pub fn cmd_analyze(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> Result<PathBuf> {
    let dir = analyze_dir(cfg, out, inputs);
    let data = load_data(&data_dir(cfg, out, inputs))?;
    let (_, ids) = load_ids(&quant_dir(cfg, out, inputs))?;
    let purity = purity_gain(&ids, &data.split.train_item_counts());
    let filter = layer_filter_ratio(&ids, cfg.weights.filter);
    let profile = dispersion_profile(&ids, &data.embeddings)?;
    let w_fg = front_greater_weights(&profile);
    util::write_atomic(&dir.join("purity.json"), &util::to_pretty_json(&purity)?)?;
    util::write_atomic(
        &dir.join("filter_ratio.json"),
        &util::to_pretty_json(&json!({"averaging": cfg.weights.filter, "per_layer": filter}))?,
    )?;
    util::write_atomic(
        &dir.join("dispersion.json"),
        &util::to_pretty_json(&json!({"mu": profile.mu, "delta": profile.delta, "front_greater": w_fg}))?,
    )?;
    finish(&dir, cfg)?;
    Ok(dir)
}

/// Token weights and flattened examples for training.
pub fn build_train_data(cfg: &RunConfig, data: &LoadedData, ids: &SemanticIdTable) -> Result<TrainData> {
    let profile = dispersion_profile(ids, &data.embeddings)?;
    let freq = FrequencyWeightMap::new(token_frequencies(&data.split, ids)?, cfg.weights.beta)?;
    Ok(TrainData {
        examples: prepare_examples(&data.split.train, ids, &freq, cfg.data.max_items)?,
        w_fg: front_greater_weights(&profile),
        bos: ids.vocab().bos(),
    })
}

#[derive(Serialize)]
struct WeightsEcho<'a> {
    front_greater: &'a TokenWeightVector,
    beta: f64,
    examples: usize,
}

/// Trains (or resumes training) and writes checkpoints plus the per-step log.
pub fn cmd_train(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> Result<PathBuf> {
    let dir = train_dir(cfg, out, inputs);
    let data = load_data(&data_dir(cfg, out, inputs))?;
    let (_, ids) = load_ids(&quant_dir(cfg, out, inputs))?;
    let train = build_train_data(cfg, &data, &ids)?;
    util::write_atomic(
        &dir.join("weights.json"),
        &util::to_pretty_json(&WeightsEcho {
            front_greater: &train.w_fg,
            beta: cfg.weights.beta,
            examples: train.examples.len(),
        })?,
    )?;
    match cfg.model.precision {
        Precision::F32 => train_into::<f32>(cfg, &dir, &train)?,
        Precision::F64 => train_into::<f64>(cfg, &dir, &train)?,
    }
    finish(&dir, cfg)?;
    Ok(dir)
}

fn train_into<T: Scalar>(cfg: &RunConfig, dir: &Path, data: &TrainData) -> Result<()> {
    let ckpt = dir.join(CHECKPOINT_DIR);
    let log_path = dir.join(LOG_FILE);
    let (mut model, mut state, mut log) = if ckpt.join(crate::model::MANIFEST_FILE).exists() {
        let (model, state, manifest) = load_checkpoint::<T>(&ckpt)?;
        if manifest.model != cfg.model || manifest.train != cfg.train {
            return Err(Error::Config(format!(
                "{} was written with a different model or train config",
                ckpt.display()
            )));
        }
        // keep the log lines the checkpoint already accounts for
        let mut log = Vec::new();
        if log_path.exists() {
            for line in util::read_string(&log_path)?.lines() {
                let entry: StepLog = serde_json::from_str(line)?;
                if entry.t < state.step {
                    log.extend_from_slice(line.as_bytes());
                    log.push(b'\n');
                }
            }
        }
        log::info!("resuming {} at step {}", dir.display(), state.step);
        (model, state, log)
    } else {
        let model = Model::<T>::init(&cfg.model)?;
        let state = TrainState::new(&model, &cfg.train);
        (model, state, Vec::new())
    };
    let tc = &cfg.train;
    let every = if tc.checkpoint_every == 0 { tc.steps } else { tc.checkpoint_every };
    let report_every = (tc.steps / 10).max(1);
    train_steps(&mut model, &mut state, data, tc, tc.steps, |model, state, entry| {
        serde_json::to_writer(&mut log, entry)?;
        log.push(b'\n');
        if state.step % report_every == 0 {
            log::info!(
                "step {}/{} loss {:.4} alpha {:.3?}",
                state.step,
                tc.steps,
                entry.loss.combined,
                entry.alpha
            );
        }
        if state.step % every == 0 || state.step == tc.steps {
            // log first: on resume, extra lines past the checkpoint are dropped
            util::write_atomic(&log_path, &log)?;
            save_checkpoint(&ckpt, model, state, tc)?;
        }
        Ok(())
    })?;
    if !log_path.exists() {
        util::write_atomic(&log_path, &log)?;
    }
    Ok(())
}

/// Decodes the configured split with the trained model and writes the report.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, inputs: &Inputs) -> Result<PathBuf> {
    let dir = eval_dir(cfg, out, inputs);
    let tdir = train_dir(cfg, out, inputs);
    let ckpt = tdir.join(CHECKPOINT_DIR);
    let manifest = read_manifest(&ckpt)?;
    let data = load_data(&data_dir(cfg, out, inputs))?;
    let (_, ids) = load_ids(&quant_dir(cfg, out, inputs))?;
    let report = match manifest.precision {
        Precision::F32 => eval_with::<f32>(cfg, &ckpt, &data, &ids)?,
        Precision::F64 => eval_with::<f64>(cfg, &ckpt, &data, &ids)?,
    };
    util::write_atomic(&dir.join(REPORT_FILE), &util::to_pretty_json(&report)?)?;
    finish(&dir, cfg)?;
    Ok(dir)
}

fn eval_with<T: Scalar>(cfg: &RunConfig, ckpt: &Path, data: &LoadedData, ids: &SemanticIdTable) -> Result<EvalReport> {
    let (model, _, _) = load_checkpoint::<T>(ckpt)?;
    let cases = match cfg.eval.split {
        crate::eval::EvalSplit::Test => &data.split.test,
        crate::eval::EvalSplit::Valid => &data.split.valid,
    };
    evaluate(
        &model,
        cases,
        ids,
        &build_trie(ids),
        &data.split.train_item_counts(),
        cfg.data.max_items,
        &cfg.eval,
    )
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    require(dir, "tokweight eval")?;
    Ok(serde_json::from_str(&util::read_string(&dir.join(REPORT_FILE))?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateRow {
    pub mode: WeightMode,
    pub seed: u64,
    pub hit: BTreeMap<String, f64>,
    pub ndcg: BTreeMap<String, f64>,
    pub head_hit: BTreeMap<String, f64>,
    pub tail_hit: BTreeMap<String, f64>,
    pub decile_l1: f64,
    pub eval_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stdev: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, stdev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateSummary {
    pub mode: WeightMode,
    pub runs: usize,
    pub hit: BTreeMap<String, MeanStd>,
    pub ndcg: BTreeMap<String, MeanStd>,
    pub tail_hit: BTreeMap<String, MeanStd>,
    pub decile_l1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateTable {
    pub rows: Vec<AblateRow>,
    pub summary: Vec<AblateSummary>,
}

fn summarize(rows: &[AblateRow], mode: WeightMode) -> AblateSummary {
    let mine: Vec<&AblateRow> = rows.iter().filter(|r| r.mode == mode).collect();
    let per_k = |get: &dyn Fn(&AblateRow) -> &BTreeMap<String, f64>| -> BTreeMap<String, MeanStd> {
        get(mine[0])
            .keys()
            .map(|k| {
                let vals: Vec<f64> = mine.iter().map(|r| get(r)[k]).collect();
                (k.clone(), MeanStd::of(&vals))
            })
            .collect()
    };
    AblateSummary {
        mode,
        runs: mine.len(),
        hit: per_k(&|r| &r.hit),
        ndcg: per_k(&|r| &r.ndcg),
        tail_hit: per_k(&|r| &r.tail_hit),
        decile_l1: MeanStd::of(&mine.iter().map(|r| r.decile_l1).collect::<Vec<_>>()),
    }
}

/// Runs the whole pipeline for every configured mode and seed and tabulates the
/// evaluation metrics. Finished stages are reused.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let dir = stage_dir(out, "ablate", json!(cfg));
    let mut rows = Vec::new();
    for &seed in &cfg.ablate.seeds {
        for &mode in &cfg.ablate.modes {
            let mut run = cfg.with_seed(seed)?;
            run.train.mode = mode;
            let inputs = Inputs::default();
            cmd_synth(&run, out)?;
            cmd_quantize(&run, out, &inputs)?;
            let edir = eval_dir(&run, out, &inputs);
            if !is_complete(&edir) {
                if !is_complete(&train_dir(&run, out, &inputs)) {
                    log::info!("training mode {mode}, seed {seed}");
                    cmd_train(&run, out, &inputs)?;
                }
                cmd_eval(&run, out, &inputs)?;
            }
            let report = read_report(&edir)?;
            log::info!("mode {mode}, seed {seed}: hit {:?}, tail hit {:?}", report.hit, report.tail.hit);
            rows.push(AblateRow {
                mode,
                seed,
                hit: report.hit,
                ndcg: report.ndcg,
                head_hit: report.head.hit,
                tail_hit: report.tail.hit,
                decile_l1: report.decile.l1,
                eval_dir: dir_name(&edir),
            });
        }
    }
    let summary = cfg.ablate.modes.iter().map(|&m| summarize(&rows, m)).collect();
    let table = AblateTable { rows, summary };
    util::write_atomic(&dir.join(TABLE_FILE), &util::to_pretty_json(&table)?)?;
    finish(&dir, cfg)?;
    Ok(dir)
}

pub fn read_table(dir: &Path) -> Result<AblateTable> {
    require(dir, "tokweight ablate")?;
    Ok(serde_json::from_str(&util::read_string(&dir.join(TABLE_FILE))?)?)
}
