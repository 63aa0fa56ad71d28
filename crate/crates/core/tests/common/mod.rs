#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokweight::eval::constrained_beam_search;
use tokweight::model::{loss_and_grad, teacher_input, Example, Model, ModelConfig, Precision};
use tokweight::quant::{build_trie, SemanticIdTable};
use tokweight::objective::{CurriculumState, WeightMode};
use tokweight::weights::TokenWeightVector;

pub const GC_LAYERS: usize = 3;
pub const GC_CODES: usize = 4;

/// Vocabulary of `L * K` code tokens followed by pad and bos.
pub fn pad(layers: usize, codes: usize) -> u32 {
    (layers * codes) as u32
}

pub fn bos(layers: usize, codes: usize) -> u32 {
    pad(layers, codes) + 1
}

/// Two encoder and two decoder layers of width 32.
pub fn small_config(tie: bool) -> ModelConfig {
    ModelConfig {
        vocab: GC_LAYERS * GC_CODES + 2,
        d_model: 32,
        d_ff: 48,
        enc_layers: 2,
        dec_layers: 2,
        heads: 4,
        max_positions: 12,
        target_len: GC_LAYERS,
        dropout: 0.0,
        tie_embeddings: tie,
        precision: Precision::F64,
        seed: 5,
    }
}

pub fn random_id(rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..GC_LAYERS)
        .map(|l| (l * GC_CODES) as u32 + rng.random_range(0..GC_CODES as u32))
        .collect()
}

/// A batch whose first example ends in padding, so masks are exercised.
pub fn small_batch(seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = pad(GC_LAYERS, GC_CODES);
    (0..2)
        .map(|b| {
            let mut x: Vec<u32> = (0..2).flat_map(|_| random_id(&mut rng)).collect();
            if b == 0 {
                x.extend([p, p]);
            }
            let w: Vec<f64> = (0..GC_LAYERS).map(|_| rng.random_range(0.1..2.0)).collect();
            Example {
                x,
                y: random_id(&mut rng),
                w_fr: TokenWeightVector::normalized(w),
            }
        })
        .collect()
}

/// Differences smaller than this are at the resolution of a central difference on an
/// O(10) loss in double precision, so gradients below it are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-5;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR)
}

/// Largest relative error between analytic and central-difference gradients for each
/// mode and parameter tensor, plus one `"theta"` entry per mode for the objective scales.
///
/// The component losses do not depend on the mixing weights, so one pair of perturbed
/// evaluations per element yields the central difference of every mode's mixture.
pub fn gradient_check(
    model: &Model<f64>,
    batch: &[Example],
    w_fg: &TokenWeightVector,
    state: &CurriculumState,
    modes: &[WeightMode],
    step: f64,
) -> Vec<(WeightMode, String, f64)> {
    let refs: Vec<&Example> = batch.iter().collect();
    let bos = bos(GC_LAYERS, GC_CODES);
    let analytic: Vec<_> = modes
        .iter()
        .map(|&m| loss_and_grad(model, &refs, w_fg, bos, state.alphas(m), None).unwrap())
        .collect();
    let losses = |m: &Model<f64>| loss_and_grad(m, &refs, w_fg, bos, [1.0, 0.0, 0.0], None).unwrap().breakdown.losses();
    let mut probe = model.clone();
    let mut worst = vec![vec![0.0f64; model.params.len()]; modes.len()];
    for ti in 0..model.params.len() {
        for j in 0..model.params.data[ti].len() {
            let orig = probe.params.data[ti][j];
            probe.params.data[ti][j] = orig + step;
            let up = losses(&probe);
            probe.params.data[ti][j] = orig - step;
            let down = losses(&probe);
            probe.params.data[ti][j] = orig;
            for (mi, &m) in modes.iter().enumerate() {
                let a = state.alphas(m);
                let fd: f64 = (0..3).map(|k| a[k] * (up[k] - down[k])).sum::<f64>() / (2.0 * step);
                let e = relative_error(analytic[mi].grads.data[ti][j], fd);
                worst[mi][ti] = worst[mi][ti].max(e);
            }
        }
    }
    let mut out = Vec::new();
    for (mi, &m) in modes.iter().enumerate() {
        for (ti, &e) in worst[mi].iter().enumerate() {
            out.push((m, model.params.names[ti].clone(), e));
        }
        let g = state.theta_grad(m, analytic[mi].breakdown.losses());
        let mut w: f64 = 0.0;
        for k in 0..3 {
            let f = |d: f64| {
                let mut s = state.clone();
                s.theta[k] += d;
                loss_and_grad(model, &refs, w_fg, bos, s.alphas(m), None).unwrap().breakdown.combined
            };
            w = w.max(relative_error(g[k], (f(step) - f(-step)) / (2.0 * step)));
        }
        out.push((m, "theta".into(), w));
    }
    out
}

/// `n` distinct random IDs over `GC_LAYERS` layers of `GC_CODES` codes.
pub fn random_table(n: usize, rng: &mut ChaCha8Rng) -> SemanticIdTable {
    let total = GC_CODES.pow(GC_LAYERS as u32);
    let mut all: Vec<usize> = (0..total).collect();
    all.shuffle(rng);
    let codes: Vec<Vec<u32>> = all[..n]
        .iter()
        .map(|&v| (0..GC_LAYERS).rev().map(|l| ((v / GC_CODES.pow(l as u32)) % GC_CODES) as u32).collect())
        .collect();
    let items = (0..n).map(|i| format!("item{i:03}")).collect();
    SemanticIdTable::from_codes(items, codes, GC_CODES).unwrap()
}

/// Scores every ID in the table with teacher forcing and sorts best first, ties by codes.
pub fn exhaustive_ranking(model: &Model<f64>, x: &[u32], ids: &SemanticIdTable) -> Vec<(usize, f64)> {
    let vocab = ids.vocab();
    let v = model.vocab();
    let mut scored: Vec<(usize, f64)> = (0..ids.len())
        .map(|i| {
            let y = vocab.encode_id(ids.codes(i));
            let logits = model.logits(x, &teacher_input(vocab.bos(), &y)).unwrap();
            let score = y
                .iter()
                .enumerate()
                .map(|(p, &t)| {
                    let row = &logits[p * v..(p + 1) * v];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
                    row[t as usize] - lse
                })
                .sum();
            (i, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids.codes(a.0).cmp(ids.codes(b.0))));
    scored
}

/// Beam search at width `N` reproduces the exhaustive ranking item for item.
pub fn beam_matches_oracle(model: &Model<f64>, x: &[u32], ids: &SemanticIdTable) -> bool {
    let trie = build_trie(ids);
    let beam = constrained_beam_search(model, x, &trie, ids, ids.len()).unwrap();
    let oracle = exhaustive_ranking(model, x, ids);
    beam.len() == oracle.len()
        && beam
            .entries
            .iter()
            .zip(&oracle)
            .all(|(b, &(item, score))| b.item == item && (b.logprob - score).abs() <= 1e-9)
}
