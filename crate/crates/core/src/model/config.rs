use serde::{Deserialize, Serialize};

use super::Precision;
use crate::error::{Error, Result};

/// Shape of the encoder-decoder model.
///
/// `vocab`, `max_positions` and `target_len` are usually filled in from the semantic ID
/// table and the history cap before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab: usize,
    pub d_model: usize,
    /// Feed-forward hidden width.
    pub d_ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    /// Longest encoder input in tokens.
    pub max_positions: usize,
    /// Decoder length, the number of tokens in a semantic ID.
    pub target_len: usize,
    pub dropout: f64,
    /// Reuse the token embedding as the output projection.
    pub tie_embeddings: bool,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab: 0,
            d_model: 64,
            d_ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            max_positions: 0,
            target_len: 0,
            dropout: 0.1,
            tie_embeddings: true,
            precision: Precision::F32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("model: {m}")));
        for (name, v) in [
            ("vocab", self.vocab),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
            ("max_positions", self.max_positions),
            ("target_len", self.target_len),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("heads ({}) must divide d_model ({})", self.heads, self.d_model));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Closed-form parameter count.
    ///
    /// Embeddings `V d + P d + T d`; each attention block `4 (d^2 + d)`; each layer norm
    /// `2 d`; each feed-forward `2 d f + f + d`. Encoder layers hold one attention, two
    /// norms and a feed-forward; decoder layers two attentions, three norms and a
    /// feed-forward; both stacks end in a norm. The output adds a bias `V` and, when
    /// untied, a `d V` projection.
    pub fn param_count(&self) -> usize {
        let (v, d, f) = (self.vocab, self.d_model, self.d_ff);
        let attn = 4 * (d * d + d);
        let ln = 2 * d;
        let ffn = 2 * d * f + f + d;
        let emb = v * d + self.max_positions * d + self.target_len * d;
        let enc = self.enc_layers * (attn + 2 * ln + ffn) + ln;
        let dec = self.dec_layers * (2 * attn + 3 * ln + ffn) + ln;
        let out = v + if self.tie_embeddings { 0 } else { d * v };
        emb + enc + dec + out
    }
}
