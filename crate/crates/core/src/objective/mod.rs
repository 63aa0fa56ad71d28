//! Token-weighted cross-entropy and the three-way curriculum mixture.
//!
//! The training loss is `sum_j alpha_j * L_j` over the front-greater, frequency and
//! plain ("original") objectives. Mixing weights come from learnable scales
//! `lambda = exp(theta)`; under the curriculum the front-greater and plain scales decay
//! as `exp(-c t)` while the frequency scale grows as `1 - exp(-c t)`.

mod curriculum;
mod nll;

pub use curriculum::{curriculum_alphas, CurriculumState, WeightMode, DEFAULT_DECAY};
pub use nll::{
    log_softmax, logsumexp, multi_target_loss, scaled_softmax_residual, weighted_nll, weighted_nll_grad, LossBreakdown,
    MultiTargetOutput, FG, FR, OR,
};
