use super::{Matrix, Real};
use crate::error::{Error, Result};

const ZERO_NORM: f64 = 1e-12;
/// Slack allowed on unit-norm preconditions of similarity kernels.
const UNIT_SLACK: f64 = 1e-5;

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; 8] = x.try_into().expect("chunk of 8");
        let y: &[T; 8] = y.try_into().expect("chunk of 8");
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`.
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    let mut cy = y.chunks_exact_mut(8);
    let mut cx = x.chunks_exact(8);
    for (yc, xc) in (&mut cy).zip(&mut cx) {
        let yc: &mut [T; 8] = yc.try_into().expect("chunk of 8");
        let xc: &[T; 8] = xc.try_into().expect("chunk of 8");
        for l in 0..8 {
            yc[l] += alpha * xc[l];
        }
    }
    for (a, &b) in cy.into_remainder().iter_mut().zip(cx.remainder()) {
        *a += alpha * b;
    }
}

pub fn l2_normalize<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let norm = dot(v, v).sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("l2_normalize"));
    }
    if norm.as_f64() < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Normalizes every row, returning the normalized matrix and the original
/// row norms.
pub fn normalize_rows<T: Real>(m: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("normalize_rows"));
        }
        if norm.as_f64() < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        for x in row.iter_mut() {
            *x = *x / norm;
        }
        norms.push(norm);
    }
    Ok((out, norms))
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

/// Temperature-scaled log-softmax, evaluated with max subtraction.
pub fn log_softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_temperature(tau)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
    let sum: f64 = logits.iter().map(|&s| (s / tau - max).exp()).sum();
    let lse = max + sum.ln();
    Ok(logits.iter().map(|&s| s / tau - lse).collect())
}

/// Temperature-scaled softmax `exp(s_j / τ) / Σ exp(s_i / τ)`.
pub fn softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_temperature(tau)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
    let mut out: Vec<f64> = logits.iter().map(|&s| (s / tau - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

fn check_unit_rows<T: Real>(m: &Matrix<T>) -> Result<()> {
    for row in m.iter_rows() {
        let norm = dot(row, row).sqrt().as_f64();
        if (norm - 1.0).abs() > UNIT_SLACK {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    Ok(())
}

/// Pairwise cosine similarities of two sets of unit rows.
pub fn cosine_sim_matrix<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "cosine_sim_matrix",
            expected: a.cols(),
            found: b.cols(),
        });
    }
    check_unit_rows(a)?;
    check_unit_rows(b)?;
    a.matmul_transposed(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    #[test]
    fn normalizes_pythagorean_triple() {
        let v = l2_normalize(&[3.0_f64, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[0.0_f64, 0.0, 1.0]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(matches!(l2_normalize(&[0.0_f64; 3]), Err(Error::ZeroVector)));
        assert!(matches!(l2_normalize(&[1e-14_f64, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn single_precision_normalization_is_unit() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let v: Vec<f32> = (0..17).map(|_| rng.normal() as f32).collect();
            let u = l2_normalize(&v).unwrap();
            let n = dot(&u, &u).sqrt() as f64;
            assert!((n - 1.0).abs() < f32::unit_tolerance());
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_temp(&[1.0; 4], 0.1).unwrap(), vec![0.25; 4]);
        assert_eq!(softmax_temp(&[3.7], 0.5).unwrap(), vec![1.0]);
        let p = softmax_temp(&[1.0, 0.0], 1.0).unwrap();
        // direct evaluation of e/(e+1)
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(softmax_temp(&[1.0], 0.0), Err(Error::InvalidTemperature(_))));
        assert!(matches!(softmax_temp(&[1.0], -2.0), Err(Error::InvalidTemperature(_))));
    }

    #[test]
    fn cosine_of_basis_is_identity() {
        let eye = Matrix::<f64>::identity(5);
        assert_eq!(cosine_sim_matrix(&eye, &eye).unwrap(), eye);
    }

    #[test]
    fn cosine_matches_naive_loop() {
        let mut rng = Rng::new(11);
        let a = rng.unit_rows::<f64>(7, 13);
        let b = rng.unit_rows::<f64>(9, 13);
        let s = cosine_sim_matrix(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..9 {
                let mut naive = 0.0;
                for k in 0..13 {
                    naive += a.get(i, k) * b.get(j, k);
                }
                assert!((s.get(i, j) - naive).abs() < 1e-6);
                assert!(s.get(i, j).abs() <= 1.0 + 1e-5);
            }
        }
        // self-similarity
        let self_sim = cosine_sim_matrix(&a, &a).unwrap();
        for i in 0..7 {
            assert!((self_sim.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_rejects_mismatch_and_non_unit() {
        let a = Matrix::<f64>::identity(3);
        let b = Matrix::<f64>::identity(4);
        assert!(matches!(
            cosine_sim_matrix(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        let c = Matrix::new(1, 3, vec![2.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cosine_sim_matrix(&a, &c), Err(Error::NotUnitNorm { .. })));
    }

    proptest! {
        #[test]
        fn softmax_is_a_simplex_point(
            logits in prop::collection::vec(-50.0f64..50.0, 1..40),
            tau in 1e-3f64..=100.0,
        ) {
            let p = softmax_temp(&logits, tau).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn softmax_is_shift_invariant(
            logits in prop::collection::vec(-1.0f64..1.0, 1..40),
            shift in -5.0f64..5.0,
            tau in 0.05f64..=100.0,
        ) {
            let p = softmax_temp(&logits, tau).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let q = softmax_temp(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_transpose_symmetry(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, d in 1usize..12) {
            let mut rng = Rng::new(seed);
            let a = rng.unit_rows::<f64>(n, d);
            let b = rng.unit_rows::<f64>(m, d);
            let ab = cosine_sim_matrix(&a, &b).unwrap();
            let ba = cosine_sim_matrix(&b, &a).unwrap();
            prop_assert_eq!(ab.transpose(), ba);
        }
    }
}
