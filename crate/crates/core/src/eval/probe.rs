use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::knn::{accuracy, argmax_first};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1.0,
            batch_size: 256,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "probe epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(
                "probe lr must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// Mean cross-entropy over the last epoch.
    pub final_loss: f64,
}

struct Linear {
    classes: usize,
    dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for ((o, w), b) in out.iter_mut().zip(self.weight.chunks_exact(self.dim)).zip(&self.bias) {
            *o = b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn predict(&self, x: &Matrix<f64>) -> Vec<usize> {
        let mut logits = vec![0.0; self.classes];
        x.iter_rows()
            .map(|row| {
                self.logits(row, &mut logits);
                argmax_first(&logits)
            })
            .collect()
    }
}

/// Multinomial logistic regression on frozen features, trained from zero by
/// minibatch SGD with a cosine learning-rate decay. Returns eval accuracy.
pub fn linear_probe<T: Real>(
    train: &Matrix<T>,
    train_labels: &[usize],
    eval: &Matrix<T>,
    eval_labels: &[usize],
    config: &ProbeConfig,
) -> Result<ProbeOutcome> {
    config.validate()?;
    if train.rows() == 0 {
        return Err(Error::EmptyTrainSet);
    }
    if train_labels.len() != train.rows() || eval_labels.len() != eval.rows() {
        return Err(Error::ShapeMismatch("probe labels do not match feature rows".into()));
    }
    if eval.cols() != train.cols() {
        return Err(Error::DimensionMismatch {
            context: "probe feature width",
            expected: train.cols(),
            found: eval.cols(),
        });
    }
    let x = train.cast::<f64>();
    let xe = eval.cast::<f64>();
    if !x.is_finite() || !xe.is_finite() {
        return Err(Error::NonFinite("probe features"));
    }
    let classes = train_labels.iter().chain(eval_labels).max().map_or(1, |&m| m + 1);
    let dim = x.cols();
    let mut model = Linear {
        classes,
        dim,
        weight: vec![0.0; classes * dim],
        bias: vec![0.0; classes],
    };

    let n = x.rows();
    let batches = n.div_ceil(config.batch_size);
    let total = (config.epochs * batches) as f64;
    let mut rng = Rng::new(config.seed);
    let mut grad_w = vec![0.0; classes * dim];
    let mut grad_b = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    let mut step = 0usize;
    let mut final_loss = 0.0;

    for _ in 0..config.epochs {
        let perm = rng.permutation(n);
        let mut epoch_loss = 0.0;
        for batch in perm.chunks(config.batch_size) {
            grad_w.fill(0.0);
            grad_b.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let row = x.row(i);
                model.logits(row, &mut probs);
                let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for p in probs.iter_mut() {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                let y = train_labels[i];
                epoch_loss += -(probs[y] / sum).ln();
                for c in 0..classes {
                    let g = (probs[c] / sum - (c == y) as u8 as f64) * scale;
                    grad_b[c] += g;
                    for (gw, &xv) in grad_w[c * dim..(c + 1) * dim].iter_mut().zip(row) {
                        *gw += g * xv;
                    }
                }
            }
            let lr = config.lr * 0.5 * (1.0 + (PI * step as f64 / total).cos());
            for (w, g) in model.weight.iter_mut().zip(&grad_w) {
                *w -= lr * (g + config.weight_decay * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= lr * g;
            }
            step += 1;
        }
        final_loss = epoch_loss / n as f64;
    }

    Ok(ProbeOutcome {
        accuracy: accuracy(&model.predict(&xe), eval_labels),
        train_accuracy: accuracy(&model.predict(&x), train_labels),
        final_loss,
    })
}
