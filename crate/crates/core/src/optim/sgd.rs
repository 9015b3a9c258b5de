use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Real;

use super::TrainPlan;

/// Linear warmup from 0 to `base_lr` over `warmup_epochs`, then cosine decay
/// to 0 at the end of `total_epochs`.
pub fn lr_at(step: u64, steps_per_epoch: u64, plan: &TrainPlan) -> f64 {
    let warm = plan.warmup_epochs * steps_per_epoch;
    let total = plan.total_epochs * steps_per_epoch;
    if step < warm {
        plan.base_lr * step as f64 / warm as f64
    } else if total <= warm {
        plan.base_lr
    } else {
        let t = ((step - warm) as f64 / (total - warm) as f64).min(1.0);
        plan.base_lr * 0.5 * (1.0 + (PI * t).cos())
    }
}

/// Momentum buffer of [`sgd_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<T>,
}

impl<T: Real> SgdState<T> {
    pub fn new(n_params: usize) -> Self {
        Self {
            velocity: vec![T::zero(); n_params],
        }
    }
}

/// Classic SGD with L2 weight decay folded into the gradient:
/// `g = grad + wd·θ; v = μ·v + g; θ = θ − lr·v`.
pub fn sgd_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    lr: f64,
    weight_decay: f64,
    momentum: f64,
    state: &mut SgdState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} velocity entries",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    let (lr, wd, mu) = (T::from_f64(lr), T::from_f64(weight_decay), T::from_f64(momentum));
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let g = g + wd * *p;
        *v = mu * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}
