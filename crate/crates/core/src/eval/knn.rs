use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, top_k_desc, Matrix, Real};

const UNIT_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Vote {
    /// Each neighbor adds `exp(sim / temperature)` to its class.
    Weighted { temperature: f64 },
    /// Each neighbor adds one vote.
    Majority,
}

impl Default for Vote {
    fn default() -> Self {
        Vote::Weighted { temperature: 0.07 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub vote: Vote,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            vote: Vote::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnOutcome {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    /// Neighbors actually used: `min(k, n_train)`.
    pub k: usize,
    pub clamped: bool,
}

fn check_unit<T: Real>(m: &Matrix<T>, what: &'static str) -> Result<()> {
    for row in m.iter_rows() {
        let norm = dot(row, row).sqrt().as_f64();
        if !norm.is_finite() {
            return Err(Error::NonFinite(what));
        }
        if (norm - 1.0).abs() > UNIT_SLACK {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    Ok(())
}

/// Predicts each query's class from its `k` highest-cosine training rows.
/// Neighbor ties go to the lower training index, score ties to the lower
/// class index.
pub fn knn_predict<T: Real>(
    train: &Matrix<T>,
    train_labels: &[usize],
    queries: &Matrix<T>,
    config: &KnnConfig,
) -> Result<(Vec<usize>, usize)> {
    if train.rows() == 0 {
        return Err(Error::EmptyTrainSet);
    }
    if train_labels.len() != train.rows() {
        return Err(Error::DimensionMismatch {
            context: "knn train labels",
            expected: train.rows(),
            found: train_labels.len(),
        });
    }
    if queries.cols() != train.cols() {
        return Err(Error::DimensionMismatch {
            context: "knn query width",
            expected: train.cols(),
            found: queries.cols(),
        });
    }
    if config.k == 0 {
        return Err(Error::InvalidConfig("knn k must be positive".into()));
    }
    if let Vote::Weighted { temperature } = config.vote {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidTemperature(temperature));
        }
    }
    check_unit(train, "knn train features")?;
    check_unit(queries, "knn query features")?;

    let k = config.k.min(train.rows());
    let n_classes = train_labels.iter().max().map_or(0, |&m| m + 1);
    let predictions = (0..queries.rows())
        .into_par_iter()
        .map(|q| {
            let query = queries.row(q);
            let sims: Vec<f64> = train.iter_rows().map(|t| dot(query, t).as_f64()).collect();
            let mut scores = vec![0.0f64; n_classes];
            for i in top_k_desc(&sims, k) {
                scores[train_labels[i]] += match config.vote {
                    Vote::Weighted { temperature } => (sims[i] / temperature).exp(),
                    Vote::Majority => 1.0,
                };
            }
            argmax_first(&scores)
        })
        .collect();
    Ok((predictions, k))
}

pub(crate) fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / predictions.len() as f64
}

pub fn knn_classify<T: Real>(
    train: &Matrix<T>,
    train_labels: &[usize],
    queries: &Matrix<T>,
    query_labels: &[usize],
    config: &KnnConfig,
) -> Result<KnnOutcome> {
    if query_labels.len() != queries.rows() {
        return Err(Error::DimensionMismatch {
            context: "knn query labels",
            expected: queries.rows(),
            found: query_labels.len(),
        });
    }
    let (predictions, k) = knn_predict(train, train_labels, queries, config)?;
    Ok(KnnOutcome {
        accuracy: accuracy(&predictions, query_labels),
        predictions,
        k,
        clamped: k < config.k,
    })
}
