use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Real, Rng};

use super::{Network, NetworkSpec};

/// Query network trained by gradient descent and its exponential moving
/// average, the key network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPair<T> {
    pub query: Network<T>,
    key: Network<T>,
}

impl<T: Real> EncoderPair<T> {
    /// Key network starts as an exact copy of the query network.
    pub fn new(query: Network<T>) -> Self {
        Self {
            key: query.clone(),
            query,
        }
    }

    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        Ok(Self::new(Network::new(spec, rng)?))
    }

    pub fn from_parts(query: Network<T>, key: Network<T>) -> Result<Self> {
        if query.spec() != key.spec() {
            return Err(Error::IncompatibleCheckpoint(
                "query and key networks differ in shape".into(),
            ));
        }
        Ok(Self { query, key })
    }

    pub fn key(&self) -> &Network<T> {
        &self.key
    }

    /// `θ_k ← m θ_k + (1 − m) θ_q`, elementwise. `m` must lie in `[0, 1]`;
    /// `m = 1` leaves the key network unchanged.
    pub fn ema_update(&mut self, m: f64) {
        debug_assert!((0.0..=1.0).contains(&m), "momentum {m}");
        if m == 0.0 {
            self.key.params_mut().copy_from_slice(self.query.params());
            return;
        }
        let rate = T::from_f64(1.0 - m);
        for (k, &q) in self.key.params_mut().iter_mut().zip(self.query.params()) {
            let v = *k + rate * (q - *k);
            // rounding must not leave the segment between old key and query
            let (lo, hi) = if *k <= q { (*k, q) } else { (q, *k) };
            *k = v.max(lo).min(hi);
        }
    }
}

/// Cosine momentum: `1 − (1 − m0)(cos(π t / T) + 1) / 2`, rising from `m0`
/// at step 0 to 1 at step `T`.
pub fn momentum_at(step: u64, total_steps: u64, m0: f64) -> f64 {
    if total_steps == 0 {
        return m0;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    1.0 - (1.0 - m0) * ((PI * t).cos() + 1.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn pair(seed: u64) -> EncoderPair<f64> {
        let spec = NetworkSpec::new(vec![3, 4], 5, 2).unwrap();
        let mut rng = Rng::new(seed);
        let q = Network::new(spec.clone(), &mut rng).unwrap();
        let k = Network::new(spec, &mut rng).unwrap();
        EncoderPair::from_parts(q, k).unwrap()
    }

    #[test]
    fn scalar_update() {
        let mut p = pair(1);
        p.key.params_mut().fill(1.0);
        p.query.params_mut().fill(0.0);
        p.ema_update(0.99);
        assert!(p.key().params().iter().all(|&v| (v - 0.99).abs() < 1e-12));
    }

    #[test]
    fn zero_momentum_copies_query() {
        let mut p = pair(2);
        p.ema_update(0.0);
        assert_eq!(p.key().params(), p.query.params());
    }

    #[test]
    fn equal_networks_are_a_fixed_point() {
        let mut p = EncoderPair::new(pair(3).query);
        let before = p.key().clone();
        for m in [0.1, 0.5, 0.99, 0.999] {
            p.ema_update(m);
        }
        assert_eq!(p.key(), &before);
    }

    #[test]
    fn momentum_schedule_endpoints() {
        assert_eq!(momentum_at(0, 1000, 0.99), 0.99);
        assert_eq!(momentum_at(1000, 1000, 0.99), 1.0);
        assert!((momentum_at(500, 1000, 0.99) - 0.995).abs() < 1e-12);
        let vals: Vec<f64> = (0..=1000).map(|t| momentum_at(t, 1000, 0.9)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    proptest! {
        #[test]
        fn update_is_convex(seed in any::<u64>(), m in 0.0f64..1.0) {
            let mut p = pair(seed);
            let old = p.key().params().to_vec();
            p.ema_update(m);
            for ((&new, &k), &q) in p.key().params().iter().zip(&old).zip(p.query.params()) {
                prop_assert!(new >= k.min(q) && new <= k.max(q));
                let expect = m * k + (1.0 - m) * q;
                prop_assert!((new - expect).abs() < 1e-12);
            }
        }
    }
}
