use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use super::{teacher_input, Model, ParamSet, Scalar};
use crate::data::{flatten_history, Sample};
use crate::error::{Error, Result};
use crate::objective::{multi_target_loss, CurriculumState, LossBreakdown, WeightMode, DEFAULT_DECAY};
use crate::quant::SemanticIdTable;
use crate::weights::{FrequencyWeightMap, TokenWeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub optimizer: AdamWConfig,
    pub mode: WeightMode,
    /// Curriculum decay rate per optimizer step.
    pub c: f64,
    /// Keep the objective scales at their initial value.
    pub freeze_lambda: bool,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            steps: 2000,
            optimizer: AdamWConfig::default(),
            mode: WeightMode::MultiCurriculum,
            c: DEFAULT_DECAY,
            freeze_lambda: false,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("train: batch_size and steps must be positive".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("train: decay rate c must be positive, got {}", self.c)));
        }
        self.optimizer.validate()
    }
}

/// One flattened training case with its frequency weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<u32>,
    pub y: Vec<u32>,
    pub w_fr: TokenWeightVector,
}

/// Flattens samples into token sequences and resolves each target's frequency weights.
pub fn prepare_examples(
    samples: &[Sample],
    ids: &SemanticIdTable,
    freq: &FrequencyWeightMap,
    max_items: usize,
) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| {
            let mut items = s.history.clone();
            items.push(s.target.clone());
            let flat = flatten_history(&items, ids, max_items)?;
            let codes = ids.codes_of(&s.target).expect("flatten checked the target");
            Ok(Example {
                x: flat.x,
                y: flat.y,
                w_fr: freq.weights_for(codes),
            })
        })
        .collect()
}

/// Everything the loop needs besides the model.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub examples: Vec<Example>,
    pub w_fg: TokenWeightVector,
    pub bos: u32,
}

/// Mixture loss of a batch and its gradient.
pub struct BatchGrad<T> {
    pub breakdown: LossBreakdown,
    pub grads: ParamSet<T>,
}

/// Samples per parallel task; partial gradients are summed in task order so the
/// result does not depend on the thread count.
const CHUNK: usize = 4;

/// Loss averaged over the batch and its parameter gradient.
///
/// `dropout` is `(seed, first_stream)`: sample `i` of the batch draws its masks from
/// ChaCha8 stream `first_stream + i`. `None` runs in evaluation mode.
pub fn loss_and_grad<T: Scalar>(
    model: &Model<T>,
    batch: &[&Example],
    w_fg: &TokenWeightVector,
    bos: u32,
    alpha: [f64; 3],
    dropout: Option<(u64, u64)>,
) -> Result<BatchGrad<T>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let vocab = model.vocab();
    let partials: Vec<Result<(Vec<LossBreakdown>, ParamSet<T>)>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = model.params.zeros_like();
            let mut parts = Vec::with_capacity(chunk.len());
            for (k, ex) in chunk.iter().enumerate() {
                let mut rng = dropout.map(|(seed, base)| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    r.set_stream(base + (c * CHUNK + k) as u64);
                    r
                });
                let y_in = teacher_input(bos, &ex.y);
                let (logits, trace) = model.forward(&ex.x, &y_in, rng.as_mut())?;
                let logits: Vec<f64> = logits.iter().map(|v| v.f64()).collect();
                let targets: Vec<usize> = ex.y.iter().map(|&t| t as usize).collect();
                let out = multi_target_loss(&logits, vocab, &targets, w_fg, std::slice::from_ref(&ex.w_fr), alpha)?;
                let dlogits: Vec<T> = out.dlogits.iter().map(|&g| T::of(g * inv_b)).collect();
                model.backward(&trace, &dlogits, &mut grads);
                parts.push(out.breakdown);
            }
            Ok((parts, grads))
        })
        .collect();
    let mut grads: Option<ParamSet<T>> = None;
    let mut sums = [0.0; 4];
    for p in partials {
        let (parts, g) = p?;
        for b in parts {
            sums[0] += b.l_fg;
            sums[1] += b.l_fr;
            sums[2] += b.l_or;
            sums[3] += b.combined;
        }
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    let breakdown = LossBreakdown {
        l_fg: sums[0] * inv_b,
        l_fr: sums[1] * inv_b,
        l_or: sums[2] * inv_b,
        combined: sums[3] * inv_b,
        alpha,
    };
    if !breakdown.combined.is_finite() {
        return Err(Error::NonFinite(format!("training loss {breakdown:?}")));
    }
    Ok(BatchGrad {
        breakdown,
        grads: grads.expect("non-empty batch"),
    })
}

/// Mutable training state besides the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Optimizer steps taken so far.
    pub step: u64,
    pub curriculum: CurriculumState,
    pub adam: AdamW<T>,
    pub theta_m: [f64; 3],
    pub theta_v: [f64; 3],
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: &Model<T>, cfg: &TrainConfig) -> Self {
        Self {
            step: 0,
            curriculum: CurriculumState::new(cfg.c),
            adam: AdamW::new(&model.params),
            theta_m: [0.0; 3],
            theta_v: [0.0; 3],
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// Step index at which the loss was evaluated (before the update).
    pub t: u64,
    pub alpha: [f64; 3],
    pub lambda: [f64; 3],
    pub loss: StepLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub fg: f64,
    pub fr: f64,
    pub or: f64,
    pub combined: f64,
}

/// Example indices for a step: consecutive slices of per-epoch permutations, each a
/// pure function of `(seed, epoch)`.
pub struct BatchSchedule {
    n: usize,
    batch: usize,
    seed: u64,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            n,
            batch,
            seed,
            cached: None,
        }
    }

    fn perm(&mut self, epoch: u64) -> &[usize] {
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch);
            let mut p: Vec<usize> = (0..self.n).collect();
            p.shuffle(&mut rng);
            self.cached = Some((epoch, p));
        }
        &self.cached.as_ref().expect("just filled").1
    }

    pub fn indices(&mut self, step: u64) -> Vec<usize> {
        let start = step * self.batch as u64;
        (0..self.batch as u64)
            .map(|i| {
                let pos = start + i;
                let (epoch, off) = (pos / self.n as u64, (pos % self.n as u64) as usize);
                self.perm(epoch)[off]
            })
            .collect()
    }
}

// stream offsets keep dropout draws apart from batch shuffling
const DROPOUT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Runs optimizer steps until `state.step == until`, reporting each step.
pub fn train_steps<T: Scalar>(
    model: &mut Model<T>,
    state: &mut TrainState<T>,
    data: &TrainData,
    cfg: &TrainConfig,
    until: u64,
    mut on_step: impl FnMut(&Model<T>, &TrainState<T>, &StepLog) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if data.examples.is_empty() {
        return Err(Error::Contract("no training examples".into()));
    }
    let mut schedule = BatchSchedule::new(data.examples.len(), cfg.batch_size, cfg.seed);
    while state.step < until {
        let t = state.step;
        let idx = schedule.indices(t);
        let batch: Vec<&Example> = idx.iter().map(|&i| &data.examples[i]).collect();
        let alpha = state.curriculum.alphas(cfg.mode);
        let dropout = Some((cfg.seed ^ DROPOUT_SEED_SALT, t * cfg.batch_size as u64));
        let bg = loss_and_grad(model, &batch, &data.w_fg, data.bos, alpha, dropout)?;
        if let Some(name) = bg.grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name} at step {t}")));
        }
        let log = StepLog {
            t,
            alpha,
            lambda: state.curriculum.lambda(),
            loss: StepLoss {
                fg: bg.breakdown.l_fg,
                fr: bg.breakdown.l_fr,
                or: bg.breakdown.l_or,
                combined: bg.breakdown.combined,
            },
        };
        state.step += 1;
        state.adam.step(&cfg.optimizer, state.step, &mut model.params, &bg.grads);
        if cfg.mode.learns_lambda() && !cfg.freeze_lambda {
            let g = state.curriculum.theta_grad(cfg.mode, bg.breakdown.losses());
            cfg.optimizer.update(
                state.step,
                false,
                &mut state.curriculum.theta,
                &g,
                &mut state.theta_m,
                &mut state.theta_v,
            );
        }
        state.curriculum.t = state.step;
        on_step(model, state, &log)?;
    }
    Ok(())
}
