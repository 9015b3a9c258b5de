use crate::error::{Error, Result};

use super::SmoothWeights;

fn check_inputs(sim_pos: f64, sim_negs: &[f64], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTemperature(tau));
    }
    if sim_negs.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    if !sim_pos.is_finite() || sim_negs.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("similarities"));
    }
    Ok(())
}

/// Log-partition `log Σ_j exp(s_j / τ)` over `[sim_pos, sim_negs...]` and
/// the softmax probabilities, with a single exponential per logit.
fn softmax_parts(sim_pos: f64, sim_negs: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let max = sim_negs.iter().copied().fold(sim_pos, f64::max) / tau;
    let mut probs = Vec::with_capacity(sim_negs.len() + 1);
    probs.push((sim_pos / tau - max).exp());
    probs.extend(sim_negs.iter().map(|&s| (s / tau - max).exp()));
    let sum: f64 = probs.iter().sum();
    let inv = 1.0 / sum;
    for p in &mut probs {
        *p *= inv;
    }
    (max + sum.ln(), probs)
}

/// InfoNCE: `-log softmax([s⁺, s⁻...] / τ)[0]`.
///
/// Returns the loss and its derivative with respect to `[sim_pos, sim_negs...]`,
/// which is `(p_j − δ_{j0}) / τ`.
pub fn info_nce(sim_pos: f64, sim_negs: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    check_inputs(sim_pos, sim_negs, tau)?;
    let (lse, mut grad) = softmax_parts(sim_pos, sim_negs, tau);
    let loss = lse - sim_pos / tau;
    grad[0] -= 1.0;
    for g in &mut grad {
        *g /= tau;
    }
    Ok((loss, grad))
}

/// SoftNCE: cross-entropy of the temperature softmax against the smoothed
/// target `(α, β_1..β_N)`.
///
/// The derivative with respect to logit `j` is `(W p_j − w_j) / τ` where
/// `W = α + Σβ` (equal to 1 for valid weights). Smoothing weights are
/// treated as constants.
pub fn soft_nce(sim_pos: f64, sim_negs: &[f64], weights: &SmoothWeights, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_inputs(sim_pos, sim_negs, tau)?;
    if weights.betas.len() != sim_negs.len() {
        return Err(Error::MisalignedWeights {
            weights: weights.betas.len(),
            negatives: sim_negs.len(),
        });
    }
    let (lse, mut grad) = softmax_parts(sim_pos, sim_negs, tau);
    let alpha = weights.alpha;
    let total = weights.total();

    let mut loss = alpha * (lse - sim_pos / tau);
    for (&s, &b) in sim_negs.iter().zip(&weights.betas) {
        if b != 0.0 {
            loss += b * (lse - s / tau);
        }
    }

    grad[0] = total * grad[0] - alpha;
    for (g, &b) in grad[1..].iter_mut().zip(&weights.betas) {
        *g = total * *g - b;
    }
    for g in &mut grad {
        *g /= tau;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{beta_weights, SmoothingConfig, SmoothingPattern};
    use crate::tensor::{log_softmax_temp, Rng};
    use proptest::prelude::*;

    /// Independent oracle: weighted cross-entropy of an explicit log-softmax.
    fn oracle_loss(sims: &[f64], target: &[f64], tau: f64) -> f64 {
        let logp = log_softmax_temp(sims, tau).unwrap();
        -target.iter().zip(&logp).map(|(w, l)| w * l).sum::<f64>()
    }

    fn central_diff(sims: &[f64], target: &[f64], tau: f64, h: f64) -> Vec<f64> {
        (0..sims.len())
            .map(|j| {
                let mut up = sims.to_vec();
                let mut dn = sims.to_vec();
                up[j] += h;
                dn[j] -= h;
                (oracle_loss(&up, target, tau) - oracle_loss(&dn, target, tau)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn two_equal_logits_give_ln2() {
        let (loss, _) = info_nce(0.37, &[0.37], 0.1).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_ln_n_plus_one() {
        for n in [1usize, 7, 100] {
            let (loss, _) = info_nce(0.2, &vec![0.2; n], 0.07).unwrap();
            assert!((loss - ((n + 1) as f64).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn info_nce_matches_oracle_and_finite_differences() {
        let sims = [0.9, 0.1, -0.3];
        let tau = 0.1;
        let (loss, grad) = info_nce(sims[0], &sims[1..], tau).unwrap();
        let target = [1.0, 0.0, 0.0];
        assert!(rel_err(loss, oracle_loss(&sims, &target, tau)) < 1e-12);
        let fd = central_diff(&sims, &target, tau, 1e-6);
        for (a, n) in grad.iter().zip(&fd) {
            assert!(rel_err(*a, *n) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn soft_nce_matches_oracle_and_finite_differences() {
        let sims = [0.9, 0.5, 0.3, -0.2];
        let tau = 0.1;
        let cfg = SmoothingConfig {
            pattern: SmoothingPattern::LinearDecay,
            k: 2,
            ..SmoothingConfig::default()
        };
        let w = beta_weights(&sims[1..], &cfg, 0.8).unwrap();
        // K = 2 linear decay: all 0.2 on the hardest, zero on the second
        assert!((w.betas[0] - 0.2).abs() < 1e-15);
        assert_eq!(&w.betas[1..], &[0.0, 0.0]);
        let (loss, grad) = soft_nce(sims[0], &sims[1..], &w, tau).unwrap();
        let target = [0.8, 0.2, 0.0, 0.0];
        assert!(rel_err(loss, oracle_loss(&sims, &target, tau)) < 1e-12);
        let fd = central_diff(&sims, &target, tau, 1e-6);
        for (a, n) in grad.iter().zip(&fd) {
            assert!(rel_err(*a, *n) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn soft_nce_equal_sims_give_ln_n_plus_one() {
        let sims = [0.4; 6];
        let w = SmoothWeights::new(0.5, vec![0.1, 0.2, 0.0, 0.2, 0.0]).unwrap();
        let (loss, _) = soft_nce(sims[0], &sims[1..], &w, 0.2).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(info_nce(0.1, &[], 0.1), Err(Error::EmptyNegatives)));
        assert!(matches!(info_nce(0.1, &[0.2], 0.0), Err(Error::InvalidTemperature(_))));
        let w = SmoothWeights::one_hot(3);
        assert!(matches!(
            soft_nce(0.1, &[0.2, 0.3], &w, 0.1),
            Err(Error::MisalignedWeights {
                weights: 3,
                negatives: 2
            })
        ));
    }

    #[test]
    fn gradient_is_hardness_aware() {
        let mut rng = Rng::new(8);
        let mut negs: Vec<f64> = (0..30).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        negs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (_, grad) = info_nce(0.5, &negs, 0.1).unwrap();
        let neg_grad = &grad[1..];
        assert!(neg_grad.windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #[test]
        fn alpha_one_reduces_exactly(
            sims in prop::collection::vec(-1.0f64..1.0, 2..60),
            tau in 0.02f64..2.0,
        ) {
            let a = info_nce(sims[0], &sims[1..], tau).unwrap();
            let b = soft_nce(sims[0], &sims[1..], &SmoothWeights::one_hot(sims.len() - 1), tau).unwrap();
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1, b.1);
        }

        #[test]
        fn losses_are_nonnegative(
            sims in prop::collection::vec(-1.0f64..1.0, 2..60),
            tau in 0.02f64..2.0,
            alpha in 0.0f64..=1.0,
            k in 1usize..10,
        ) {
            let cfg = SmoothingConfig { k, k_policy: crate::losses::KPolicy::Clamp, ..SmoothingConfig::default() };
            let w = beta_weights(&sims[1..], &cfg, alpha).unwrap();
            prop_assert!(info_nce(sims[0], &sims[1..], tau).unwrap().0 >= 0.0);
            prop_assert!(soft_nce(sims[0], &sims[1..], &w, tau).unwrap().0 >= 0.0);
        }

        #[test]
        fn info_nce_is_permutation_equivariant(
            sims in prop::collection::vec(-1.0f64..1.0, 3..30),
            seed in any::<u64>(),
        ) {
            let negs = &sims[1..];
            let perm = Rng::new(seed).permutation(negs.len());
            let permuted: Vec<f64> = perm.iter().map(|&i| negs[i]).collect();
            let (l0, g0) = info_nce(sims[0], negs, 0.1).unwrap();
            let (l1, g1) = info_nce(sims[0], &permuted, 0.1).unwrap();
            prop_assert!((l0 - l1).abs() < 1e-12);
            for (slot, &i) in perm.iter().enumerate() {
                prop_assert!((g1[slot + 1] - g0[i + 1]).abs() < 1e-12);
            }
        }

        #[test]
        fn soft_nce_is_permutation_invariant_with_rank_weights(
            sims in prop::collection::vec(-1.0f64..1.0, 3..30),
            seed in any::<u64>(),
            alpha in 0.0f64..=1.0,
        ) {
            let negs = &sims[1..];
            let perm = Rng::new(seed).permutation(negs.len());
            let permuted: Vec<f64> = perm.iter().map(|&i| negs[i]).collect();
            let cfg = SmoothingConfig { k: 2, ..SmoothingConfig::default() };
            let w0 = beta_weights(negs, &cfg, alpha).unwrap();
            let w1 = beta_weights(&permuted, &cfg, alpha).unwrap();
            let (l0, _) = soft_nce(sims[0], negs, &w0, 0.1).unwrap();
            let (l1, _) = soft_nce(sims[0], &permuted, &w1, 0.1).unwrap();
            prop_assert!((l0 - l1).abs() < 1e-12);
        }
    }
}
