use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::nll::{FG, FR, OR};
use crate::error::Error;

pub const DEFAULT_DECAY: f64 = 2e-5;

/// Which weighted objectives enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeightMode {
    /// Plain cross-entropy.
    #[serde(rename = "none")]
    None,
    /// Front-greater weighted cross-entropy only.
    #[serde(rename = "fg")]
    Fg,
    /// Frequency weighted cross-entropy only.
    #[serde(rename = "fr")]
    Fr,
    /// All three objectives mixed by the normalized learnable scales.
    #[serde(rename = "multi")]
    Multi,
    /// As `Multi`, with the scales modulated by the decay schedule.
    #[serde(rename = "multi+curriculum")]
    MultiCurriculum,
}

impl WeightMode {
    pub const ALL: [WeightMode; 5] = [Self::None, Self::Fg, Self::Fr, Self::Multi, Self::MultiCurriculum];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Fg => "fg",
            Self::Fr => "fr",
            Self::Multi => "multi",
            Self::MultiCurriculum => "multi+curriculum",
        }
    }

    /// Whether the scales `lambda` influence the loss.
    pub fn learns_lambda(self) -> bool {
        matches!(self, Self::Multi | Self::MultiCurriculum)
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown weighting mode {s:?}")))
    }
}

/// Learnable objective scales `lambda = exp(theta)`, decay rate `c` and step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub theta: [f64; 3],
    pub c: f64,
    pub t: u64,
}

impl CurriculumState {
    /// `lambda = (1, 1, 1)` at step 0.
    pub fn new(c: f64) -> Self {
        Self { theta: [0.0; 3], c, t: 0 }
    }

    pub fn lambda(&self) -> [f64; 3] {
        self.theta.map(f64::exp)
    }

    /// Mixing weights for a mode at the current step.
    pub fn alphas(&self, mode: WeightMode) -> [f64; 3] {
        match mode {
            WeightMode::None => [0.0, 0.0, 1.0],
            WeightMode::Fg => [1.0, 0.0, 0.0],
            WeightMode::Fr => [0.0, 1.0, 0.0],
            WeightMode::Multi => normalize(self.lambda()),
            WeightMode::MultiCurriculum => curriculum_alphas(self),
        }
    }

    /// Gradient of `sum_j alpha_j L_j` with respect to `theta`.
    ///
    /// With `alpha_j` proportional to `g_j(t) exp(theta_j)` the Jacobian is
    /// `alpha_j (delta_jk - alpha_k)`, so the gradient is `alpha_k (L_k - mixture)`.
    pub fn theta_grad(&self, mode: WeightMode, losses: [f64; 3]) -> [f64; 3] {
        if !mode.learns_lambda() {
            return [0.0; 3];
        }
        let a = self.alphas(mode);
        let mix: f64 = (0..3).map(|j| a[j] * losses[j]).sum();
        [0, 1, 2].map(|k| a[k] * (losses[k] - mix))
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let s = v[0] + v[1] + v[2];
    v.map(|x| x / s)
}

/// `lambda'_fg = e^{-ct} lambda_fg`, `lambda'_or = e^{-ct} lambda_or`,
/// `lambda'_fr = (1 - e^{-ct}) lambda_fr`, normalized onto the simplex.
pub fn curriculum_alphas(state: &CurriculumState) -> [f64; 3] {
    let x = -state.c * state.t as f64;
    let decay = x.exp();
    let grow = -x.exp_m1();
    let lam = state.lambda();
    let mut scaled = [0.0; 3];
    scaled[FG] = decay * lam[FG];
    scaled[FR] = grow * lam[FR];
    scaled[OR] = decay * lam[OR];
    normalize(scaled)
}
