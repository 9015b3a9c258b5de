use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::top_k_desc;

use super::AlphaSchedule;

const SIMPLEX_TOL: f64 = 1e-12;

/// How smoothing mass is spread over the K hardest negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingPattern {
    /// Every selected negative receives `(1 - α) / K`.
    Average,
    /// Rank `k` (1 = hardest) receives `2(K - k) / ((K - 1) K) · (1 - α)`.
    #[default]
    LinearDecay,
}

/// Behaviour when K exceeds the number of available negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    #[default]
    Checked,
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub pattern: SmoothingPattern,
    pub k: usize,
    pub alpha: AlphaSchedule,
    pub tau: f64,
    pub k_policy: KPolicy,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            pattern: SmoothingPattern::LinearDecay,
            k: 20,
            alpha: AlphaSchedule::Static { alpha: 0.8 },
            tau: 0.1,
            k_policy: KPolicy::Checked,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("smoothing K must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidTemperature(self.tau));
        }
        self.alpha.validate()
    }
}

/// Target distribution over `[positive, negatives...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothWeights {
    pub alpha: f64,
    /// One weight per negative, aligned with the similarity vector.
    pub betas: Vec<f64>,
    /// Number of negatives eligible for smoothing mass after clamping.
    pub k: usize,
    /// Set when K was reduced to the number of negatives.
    pub clamped: bool,
}

impl SmoothWeights {
    /// One-hot target on the positive.
    pub fn one_hot(n_negatives: usize) -> Self {
        Self {
            alpha: 1.0,
            betas: vec![0.0; n_negatives],
            k: 0,
            clamped: false,
        }
    }

    /// Validates an explicit weight vector against the simplex constraint.
    pub fn new(alpha: f64, betas: Vec<f64>) -> Result<Self> {
        let w = Self {
            k: betas.iter().filter(|&&b| b != 0.0).count(),
            alpha,
            betas,
            clamped: false,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn total(&self) -> f64 {
        self.alpha + self.betas.iter().sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidWeights(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.betas.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidWeights("negative or non-finite beta".into()));
        }
        let total = self.total();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Assigns smoothing mass `1 - α` to the K negatives most similar to the
/// anchor. Negatives outside the top K get exactly zero.
pub fn beta_weights(sim_negs: &[f64], config: &SmoothingConfig, alpha: f64) -> Result<SmoothWeights> {
    let n = sim_negs.len();
    if n == 0 {
        return Err(Error::EmptyNegatives);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidWeights(format!("alpha {alpha} outside [0, 1]")));
    }
    if config.k == 0 {
        return Err(Error::InvalidConfig("smoothing K must be at least 1".into()));
    }
    let (k, clamped) = if config.k > n {
        match config.k_policy {
            KPolicy::Checked => {
                return Err(Error::KTooLarge {
                    k: config.k,
                    available: n,
                })
            }
            KPolicy::Clamp => (n, true),
        }
    } else {
        (config.k, false)
    };

    let mut betas = vec![0.0; n];
    let mass = 1.0 - alpha;
    if mass > 0.0 {
        let ranked = top_k_desc(sim_negs, k);
        match config.pattern {
            SmoothingPattern::Average => {
                let share = mass / k as f64;
                for &i in &ranked {
                    betas[i] = share;
                }
            }
            SmoothingPattern::LinearDecay if k == 1 => betas[ranked[0]] = mass,
            SmoothingPattern::LinearDecay => {
                let denom = ((k - 1) * k) as f64;
                for (r, &i) in ranked.iter().enumerate() {
                    // r is zero-based, rank is r + 1; the K-th neighbour gets 0
                    betas[i] = 2.0 * (k - (r + 1)) as f64 / denom * mass;
                }
            }
        }
    }
    Ok(SmoothWeights {
        alpha,
        betas,
        k,
        clamped,
    })
}
