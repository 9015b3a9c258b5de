//! Frozen-feature evaluation: k-nearest-neighbor voting and a linear probe.

mod knn;
mod probe;

pub use knn::{accuracy, knn_classify, knn_predict, KnnConfig, KnnOutcome, Vote};
pub use probe::{linear_probe, ProbeConfig, ProbeOutcome};
