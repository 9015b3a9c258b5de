//! Counter-based SplitMix64 generator.
//!
//! The stream is fully described by a `(key, counter)` pair. Draw number
//! `c` (starting at 1) is
//!
//! ```text
//! x = key + c * 0x9E3779B97F4A7C15            (wrapping u64 arithmetic)
//! x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
//! x = (x ^ (x >> 27)) * 0x94D049BB133111EB
//! x =  x ^ (x >> 31)
//! ```
//!
//! which is exactly the SplitMix64 sequence seeded with `key`. Derived values:
//!
//! * `uniform()`  = `(x >> 11) * 2^-53`, in `[0, 1)`
//! * `below(n)`   = high 64 bits of `x * n` (128-bit product)
//! * `normal()`   = Box–Muller on two uniforms `u1, u2`:
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)`; the sine branch is discarded
//! * `fork(s)`    = a new stream with key `mix(key ^ mix(s + γ))`, counter 0
//!
//! Any language with 64-bit wrapping integers reproduces these streams.

use serde::{Deserialize, Serialize};

use super::{Matrix, Real};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub key: u64,
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { key: seed, counter: 0 }
    }

    pub fn from_state(state: RngState) -> Self {
        Self {
            key: state.key,
            counter: state.counter,
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            key: self.key,
            counter: self.counter,
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(mix(self.key ^ mix(stream.wrapping_add(GAMMA))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates, from the last element down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub fn normal_matrix<T: Real>(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix<T> {
        let data = (0..rows * cols).map(|_| T::from_f64(scale * self.normal())).collect();
        Matrix::from_vec_unchecked(rows, cols, data)
    }

    /// Rows drawn uniformly from the unit sphere.
    pub fn unit_rows<T: Real>(&mut self, rows: usize, cols: usize) -> Matrix<T> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            loop {
                let v: Vec<f64> = (0..cols).map(|_| self.normal()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    data.extend(v.iter().map(|x| T::from_f64(x / norm)));
                    break;
                }
            }
        }
        Matrix::from_vec_unchecked(rows, cols, data)
    }
}
