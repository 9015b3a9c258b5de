//! InfoNCE and its smoothed generalization, SoftNCE.
//!
//! Both losses work on cosine similarities between a query embedding, its
//! positive key and `N` negatives. SoftNCE replaces the one-hot target of
//! InfoNCE with `(α, β_1..β_N)`, where only the K negatives most similar to
//! the query receive mass. With `α = 1` the two coincide bit for bit.

mod batch;
mod nce;
mod schedule;
mod weights;

pub use batch::{
    directional_loss, directional_loss_with_weights, symmetric_pair_loss, LossKind, LossOutput, SymmetricLoss,
};
pub use nce::{info_nce, soft_nce};
pub use schedule::{alpha_at, AlphaSchedule};
pub use weights::{beta_weights, KPolicy, SmoothWeights, SmoothingConfig, SmoothingPattern};
