use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::TokenWeightVector;

/// Objective slots in every `[f64; 3]`.
pub const FG: usize = 0;
pub const FR: usize = 1;
pub const OR: usize = 2;

pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = logsumexp(row);
    row.iter().map(|v| v - lse).collect()
}

fn check_shape(logits: &[f64], vocab: usize, targets: &[usize], weights: usize) -> Result<()> {
    if vocab == 0 || logits.len() != targets.len() * vocab {
        return Err(Error::Contract(format!(
            "logits hold {} values, expected {} rows of {vocab}",
            logits.len(),
            targets.len()
        )));
    }
    if weights != targets.len() {
        return Err(Error::Contract(format!("{weights} weights for {} targets", targets.len())));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= vocab) {
        return Err(Error::Contract(format!("target {t} outside vocabulary of {vocab}")));
    }
    Ok(())
}

/// `-sum_i w_i log softmax(logits_i)[y_i]` over the rows of one sequence.
pub fn weighted_nll(logits: &[f64], vocab: usize, targets: &[usize], weights: &[f64]) -> Result<f64> {
    check_shape(logits, vocab, targets, weights.len())?;
    Ok(logits
        .chunks_exact(vocab)
        .zip(targets)
        .zip(weights)
        .map(|((row, &y), &w)| w * (logsumexp(row) - row[y]))
        .sum())
}

/// [`weighted_nll`] and its gradient with respect to the logits.
pub fn weighted_nll_grad(logits: &[f64], vocab: usize, targets: &[usize], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_shape(logits, vocab, targets, weights.len())?;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (((row, g), &y), &w) in logits.chunks_exact(vocab).zip(grad.chunks_exact_mut(vocab)).zip(targets).zip(weights) {
        let lse = logsumexp(row);
        loss += w * (lse - row[y]);
        softmax_minus_onehot(row, lse, y, w, g);
    }
    Ok((loss, grad))
}

fn softmax_minus_onehot(row: &[f64], lse: f64, y: usize, scale: f64, out: &mut [f64]) {
    if scale == 0.0 {
        return;
    }
    for (o, v) in out.iter_mut().zip(row) {
        *o = scale * (v - lse).exp();
    }
    out[y] -= scale;
}

/// `w * log( sum_v exp(alpha f_v) / (sum_v exp f_v)^alpha )`: the gap between the
/// loss on logits scaled by `alpha` and `alpha` times the unscaled loss.
pub fn scaled_softmax_residual(row: &[f64], alpha: f64, w: f64) -> f64 {
    if alpha == 1.0 {
        return 0.0;
    }
    if alpha == 0.0 {
        return w * (row.len() as f64).ln();
    }
    let scaled: Vec<f64> = row.iter().map(|v| alpha * v).collect();
    w * (logsumexp(&scaled) - alpha * logsumexp(row))
}

/// Per-objective losses in nats per sequence (summed over the ID positions, averaged
/// over the batch) and their mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_fg: f64,
    pub l_fr: f64,
    pub l_or: f64,
    pub combined: f64,
    pub alpha: [f64; 3],
}

impl LossBreakdown {
    pub fn losses(&self) -> [f64; 3] {
        [self.l_fg, self.l_fr, self.l_or]
    }
}

#[derive(Debug, Clone)]
pub struct MultiTargetOutput {
    pub breakdown: LossBreakdown,
    /// Gradient of `combined` with respect to the logits, same layout.
    pub dlogits: Vec<f64>,
}

/// Mixture loss over a batch of `B` sequences of `L` target tokens.
///
/// `logits` holds `B * L` rows of `vocab`, `targets` the matching token ids, `w_fg` the
/// static per-position front-greater weights and `w_fr` one frequency weight vector
/// per sequence. The plain objective uses unit weights.
pub fn multi_target_loss(
    logits: &[f64],
    vocab: usize,
    targets: &[usize],
    w_fg: &TokenWeightVector,
    w_fr: &[TokenWeightVector],
    alpha: [f64; 3],
) -> Result<MultiTargetOutput> {
    let layers = w_fg.len();
    let batch = w_fr.len();
    check_shape(logits, vocab, targets, batch * layers)?;
    if let Some(bad) = w_fr.iter().find(|w| w.len() != layers) {
        return Err(Error::Contract(format!("frequency weights of length {} for {layers} positions", bad.len())));
    }
    if batch == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let inv_b = 1.0 / batch as f64;
    let mut dlogits = vec![0.0; logits.len()];
    let mut sums = [0.0; 3];
    let mut combined = 0.0;
    for (r, ((row, g), &y)) in logits.chunks_exact(vocab).zip(dlogits.chunks_exact_mut(vocab)).zip(targets).enumerate() {
        let (b, i) = (r / layers, r % layers);
        let w = [w_fg[i], w_fr[b][i], 1.0];
        let lse = logsumexp(row);
        let nll = lse - row[y];
        if !nll.is_finite() {
            return Err(Error::NonFinite(format!("loss at batch row {b}, position {i}")));
        }
        for j in 0..3 {
            sums[j] += w[j] * nll;
        }
        // the alphas sum to one, so equal weights mix to themselves exactly
        let w_eff = if w[0] == w[1] && w[1] == w[2] {
            w[0]
        } else {
            alpha[FG] * w[0] + alpha[FR] * w[1] + alpha[OR] * w[2]
        };
        combined += w_eff * nll;
        softmax_minus_onehot(row, lse, y, w_eff * inv_b, g);
    }
    Ok(MultiTargetOutput {
        breakdown: LossBreakdown {
            l_fg: sums[FG] * inv_b,
            l_fr: sums[FR] * inv_b,
            l_or: sums[OR] * inv_b,
            combined: combined * inv_b,
            alpha,
        },
        dlogits,
    })
}
