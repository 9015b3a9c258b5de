use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight on the positive over the course of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Static {
        alpha: f64,
    },
    /// Cosine decay from 1 at epoch 0 to `alpha_min` at the last epoch.
    Incremental {
        alpha_min: f64,
    },
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            AlphaSchedule::Static { alpha } => alpha,
            AlphaSchedule::Incremental { alpha_min } => alpha_min,
        };
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("alpha {v} outside [0, 1]")))
        }
    }
}

/// Positive weight at `epoch` of a `total_epochs` schedule. Decays per epoch.
pub fn alpha_at(epoch: u64, total_epochs: u64, schedule: AlphaSchedule) -> f64 {
    match schedule {
        AlphaSchedule::Static { alpha } => alpha,
        AlphaSchedule::Incremental { alpha_min } => {
            if total_epochs == 0 {
                return 1.0;
            }
            let t = epoch.min(total_epochs) as f64 / total_epochs as f64;
            alpha_min + (1.0 - alpha_min) * (1.0 + (PI * t).cos()) / 2.0
        }
    }
}
