use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Matrix, Real};

use super::{beta_weights, info_nce, soft_nce, SmoothWeights, SmoothingConfig};

/// Which objective a directional loss evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    InfoNce,
    #[default]
    SoftNce,
}

/// Batch-mean contrastive loss and its gradients with respect to the
/// embeddings that produced it.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub value: f64,
    pub grad_query: Matrix<T>,
    pub grad_positive: Matrix<T>,
    /// Only filled when requested; keys and queue entries carry no gradient
    /// during training.
    pub grad_negatives: Option<Matrix<T>>,
    /// Target distribution used for each query row.
    pub weights: Vec<SmoothWeights>,
}

struct RowResult<T> {
    loss: f64,
    gpos: T,
    /// Scaled loss derivatives with respect to each negative similarity.
    coeffs: Vec<T>,
    grad_query: Vec<T>,
    weights: SmoothWeights,
}

fn check_shapes<T: Real>(queries: &Matrix<T>, keys: &Matrix<T>, negatives: &Matrix<T>) -> Result<()> {
    if queries.rows() != keys.rows() {
        return Err(Error::DimensionMismatch {
            context: "queries vs positive keys (rows)",
            expected: queries.rows(),
            found: keys.rows(),
        });
    }
    if queries.rows() == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    for (m, context) in [(keys, "positive keys (cols)"), (negatives, "negatives (cols)")] {
        if m.cols() != queries.cols() {
            return Err(Error::DimensionMismatch {
                context,
                expected: queries.cols(),
                found: m.cols(),
            });
        }
    }
    if negatives.rows() == 0 {
        return Err(Error::EmptyNegatives);
    }
    Ok(())
}

/// Similarities of `query` to every column of `neg_t` (negatives stored
/// transposed, one row per embedding coordinate).
fn similarities<T: Real>(query: &[T], neg_t: &Matrix<T>) -> Vec<f64> {
    let mut acc = vec![T::zero(); neg_t.cols()];
    for (j, &q) in query.iter().enumerate() {
        axpy(q, neg_t.row(j), &mut acc);
    }
    acc.into_iter().map(|v| v.as_f64()).collect()
}

#[allow(clippy::too_many_arguments)]
fn row_loss<T: Real>(
    query: &[T],
    key: &[T],
    neg_t: &Matrix<T>,
    config: &SmoothingConfig,
    kind: LossKind,
    alpha: f64,
    fixed: Option<&SmoothWeights>,
    scale: f64,
) -> Result<RowResult<T>> {
    let sim_pos = dot(query, key).as_f64();
    let sim_negs = similarities(query, neg_t);
    let (weights, (loss, dsims)) = match (kind, fixed) {
        (_, Some(w)) => (w.clone(), soft_nce(sim_pos, &sim_negs, w, config.tau)?),
        (LossKind::InfoNce, None) => (
            SmoothWeights::one_hot(sim_negs.len()),
            info_nce(sim_pos, &sim_negs, config.tau)?,
        ),
        (LossKind::SoftNce, None) => {
            let w = beta_weights(&sim_negs, config, alpha)?;
            let out = soft_nce(sim_pos, &sim_negs, &w, config.tau)?;
            (w, out)
        }
    };
    let gpos = T::from_f64(dsims[0] * scale);
    let coeffs: Vec<T> = dsims[1..].iter().map(|&d| T::from_f64(d * scale)).collect();
    let grad_query = key
        .iter()
        .enumerate()
        .map(|(j, &k)| gpos * k + dot(&coeffs, neg_t.row(j)))
        .collect();
    Ok(RowResult {
        loss,
        gpos,
        coeffs,
        grad_query,
        weights,
    })
}

#[allow(clippy::too_many_arguments)]
fn directional_impl<T: Real>(
    queries: &Matrix<T>,
    keys: &Matrix<T>,
    negatives: &Matrix<T>,
    config: &SmoothingConfig,
    kind: LossKind,
    alpha: f64,
    fixed: Option<&[SmoothWeights]>,
    negative_grads: bool,
) -> Result<LossOutput<T>> {
    check_shapes(queries, keys, negatives)?;
    if let Some(f) = fixed {
        if f.len() != queries.rows() {
            return Err(Error::MisalignedWeights {
                weights: f.len(),
                negatives: queries.rows(),
            });
        }
    }
    let batch = queries.rows();
    let scale = 1.0 / batch as f64;
    let neg_t = negatives.transpose();
    let rows: Vec<RowResult<T>> = (0..batch)
        .into_par_iter()
        .map(|i| {
            row_loss(
                queries.row(i),
                keys.row(i),
                &neg_t,
                config,
                kind,
                alpha,
                fixed.map(|f| &f[i]),
                scale,
            )
        })
        .collect::<Result<_>>()?;

    let dim = queries.cols();
    let mut grad_query = Matrix::zeros(batch, dim);
    let mut grad_positive = Matrix::zeros(batch, dim);
    let mut grad_negatives = negative_grads.then(|| Matrix::zeros(negatives.rows(), dim));
    let mut value = 0.0;
    let mut weights = Vec::with_capacity(batch);
    for (i, r) in rows.into_iter().enumerate() {
        value += r.loss;
        let q = queries.row(i);
        grad_query.row_mut(i).copy_from_slice(&r.grad_query);
        for (g, &v) in grad_positive.row_mut(i).iter_mut().zip(q) {
            *g = r.gpos * v;
        }
        if let Some(gn) = grad_negatives.as_mut() {
            for (n, &c) in r.coeffs.iter().enumerate() {
                for (g, &v) in gn.row_mut(n).iter_mut().zip(q) {
                    *g += c * v;
                }
            }
        }
        weights.push(r.weights);
    }
    Ok(LossOutput {
        value: value * scale,
        grad_query,
        grad_positive,
        grad_negatives,
        weights,
    })
}

/// Mean contrastive loss of each query row against its positive key row and
/// the shared negative set. Gradients are with respect to the (unit)
/// embeddings; smoothing weights are recomputed from the current
/// similarities and held constant.
pub fn directional_loss<T: Real>(
    queries: &Matrix<T>,
    keys: &Matrix<T>,
    negatives: &Matrix<T>,
    config: &SmoothingConfig,
    kind: LossKind,
    alpha: f64,
    negative_grads: bool,
) -> Result<LossOutput<T>> {
    directional_impl(queries, keys, negatives, config, kind, alpha, None, negative_grads)
}

/// Like [`directional_loss`] but with caller-supplied smoothing weights,
/// one per query row.
pub fn directional_loss_with_weights<T: Real>(
    queries: &Matrix<T>,
    keys: &Matrix<T>,
    negatives: &Matrix<T>,
    config: &SmoothingConfig,
    weights: &[SmoothWeights],
    negative_grads: bool,
) -> Result<LossOutput<T>> {
    directional_impl(
        queries,
        keys,
        negatives,
        config,
        LossKind::SoftNce,
        1.0,
        Some(weights),
        negative_grads,
    )
}

#[derive(Debug, Clone)]
pub struct SymmetricLoss<T> {
    pub value: f64,
    /// Query = view A, key = view B. Gradients already carry the 1/2 factor.
    pub a_to_b: LossOutput<T>,
    /// Query = view B, key = view A. Gradients already carry the 1/2 factor.
    pub b_to_a: LossOutput<T>,
}

fn halve<T: Real>(out: &mut LossOutput<T>) {
    let h = T::from_f64(0.5);
    for m in [&mut out.grad_query, &mut out.grad_positive]
        .into_iter()
        .chain(out.grad_negatives.as_mut())
    {
        for v in m.as_mut_slice() {
            *v *= h;
        }
    }
}

/// Mean of the two directional losses obtained by exchanging which view is
/// fed to the query encoder. Both directions see the same negatives.
#[allow(clippy::too_many_arguments)]
pub fn symmetric_pair_loss<T: Real>(
    embed_a_by_q: &Matrix<T>,
    embed_b_by_k: &Matrix<T>,
    embed_b_by_q: &Matrix<T>,
    embed_a_by_k: &Matrix<T>,
    negatives: &Matrix<T>,
    config: &SmoothingConfig,
    kind: LossKind,
    alpha: f64,
) -> Result<SymmetricLoss<T>> {
    let mut a_to_b = directional_loss(embed_a_by_q, embed_b_by_k, negatives, config, kind, alpha, false)?;
    let mut b_to_a = directional_loss(embed_b_by_q, embed_a_by_k, negatives, config, kind, alpha, false)?;
    halve(&mut a_to_b);
    halve(&mut b_to_a);
    Ok(SymmetricLoss {
        value: (a_to_b.value + b_to_a.value) * 0.5,
        a_to_b,
        b_to_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn setup(seed: u64, batch: usize, queue: usize, dim: usize) -> [Matrix<f64>; 5] {
        let mut rng = Rng::new(seed);
        [
            rng.unit_rows(batch, dim),
            rng.unit_rows(batch, dim),
            rng.unit_rows(batch, dim),
            rng.unit_rows(batch, dim),
            rng.unit_rows(queue, dim),
        ]
    }

    #[test]
    fn batch_value_is_mean_of_rows() {
        let [q, k, _, _, negs] = setup(1, 5, 9, 6);
        let cfg = SmoothingConfig {
            k: 3,
            ..SmoothingConfig::default()
        };
        let out = directional_loss(&q, &k, &negs, &cfg, LossKind::SoftNce, 0.8, true).unwrap();
        let mut mean = 0.0;
        for i in 0..5 {
            let sp = dot(q.row(i), k.row(i));
            let sn: Vec<f64> = negs.iter_rows().map(|n| dot(q.row(i), n)).collect();
            let w = beta_weights(&sn, &cfg, 0.8).unwrap();
            mean += soft_nce(sp, &sn, &w, cfg.tau).unwrap().0 / 5.0;
        }
        assert!((out.value - mean).abs() < 1e-12);
        assert!(out.grad_negatives.is_some());
    }

    #[test]
    fn embedding_gradients_match_finite_differences() {
        let [q, k, _, _, negs] = setup(2, 3, 7, 4);
        let cfg = SmoothingConfig {
            k: 3,
            ..SmoothingConfig::default()
        };
        let base = directional_loss(&q, &k, &negs, &cfg, LossKind::SoftNce, 0.7, true).unwrap();
        let weights = base.weights.clone();
        let eval = |q: &Matrix<f64>, k: &Matrix<f64>, n: &Matrix<f64>| {
            directional_loss_with_weights(q, k, n, &cfg, &weights, false)
                .unwrap()
                .value
        };
        let h = 1e-6;
        let check = |which: usize, analytic: &Matrix<f64>| {
            let mats = [&q, &k, &negs];
            for idx in 0..mats[which].as_slice().len() {
                let mut up: Vec<Matrix<f64>> = mats.iter().map(|m| (*m).clone()).collect();
                let mut dn = up.clone();
                up[which].as_mut_slice()[idx] += h;
                dn[which].as_mut_slice()[idx] -= h;
                let fd = (eval(&up[0], &up[1], &up[2]) - eval(&dn[0], &dn[1], &dn[2])) / (2.0 * h);
                let a = analytic.as_slice()[idx];
                assert!(
                    (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3) < 1e-6,
                    "{which}/{idx}: {a} vs {fd}"
                );
            }
        };
        check(0, &base.grad_query);
        check(1, &base.grad_positive);
        check(2, base.grad_negatives.as_ref().unwrap());
    }

    #[test]
    fn symmetric_is_mean_and_swap_invariant() {
        let [qa, kb, qb, ka, negs] = setup(3, 4, 16, 8);
        let cfg = SmoothingConfig {
            k: 5,
            ..SmoothingConfig::default()
        };
        let s = symmetric_pair_loss(&qa, &kb, &qb, &ka, &negs, &cfg, LossKind::SoftNce, 0.8).unwrap();
        let ab = directional_loss(&qa, &kb, &negs, &cfg, LossKind::SoftNce, 0.8, false).unwrap();
        let ba = directional_loss(&qb, &ka, &negs, &cfg, LossKind::SoftNce, 0.8, false).unwrap();
        assert_eq!(s.value, (ab.value + ba.value) * 0.5);
        let swapped = symmetric_pair_loss(&qb, &ka, &qa, &kb, &negs, &cfg, LossKind::SoftNce, 0.8).unwrap();
        assert_eq!(s.value, swapped.value);
        // identical directions give that value back
        let same = symmetric_pair_loss(&qa, &kb, &qa, &kb, &negs, &cfg, LossKind::SoftNce, 0.8).unwrap();
        assert_eq!(same.value, ab.value);
    }

    #[test]
    fn shape_errors() {
        let [q, k, _, _, negs] = setup(4, 3, 5, 4);
        let cfg = SmoothingConfig {
            k: 2,
            ..SmoothingConfig::default()
        };
        let short = q.select_rows(&[0, 1]);
        assert!(directional_loss(&short, &k, &negs, &cfg, LossKind::InfoNce, 1.0, false).is_err());
        let empty = Matrix::<f64>::zeros(0, 4);
        assert!(matches!(
            directional_loss(&q, &k, &empty, &cfg, LossKind::InfoNce, 1.0, false),
            Err(Error::EmptyNegatives)
        ));
    }
}
