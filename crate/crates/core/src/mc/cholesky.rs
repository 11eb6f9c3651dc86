//! Cholesky factorization of positive semi-definite matrices.

use crate::error::{Error, Result};

const MAX_RETRIES: usize = 6;

/// Lower factor `L` (row-major, `n × n`) with `L Lᵀ = A`.
///
/// Pivots that vanish up to rounding are treated as exact zeros, which handles
/// rank-deficient covariances such as the degenerate kernel at H = 1/2. A
/// clearly negative pivot triggers retries with a growing diagonal jitter.
pub(crate) fn cholesky_psd(a: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    if !(scale > 0.0) || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decomposition {
            what: what.into(),
            retries: 0,
            jitter: 0.0,
        });
    }
    let mut jitter = 0.0;
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            jitter = scale * 1e-14 * 10f64.powi(attempt as i32);
        }
        if let Some(l) = try_factor(a, n, jitter, scale) {
            return Ok(l);
        }
    }
    Err(Error::Decomposition {
        what: what.into(),
        retries: MAX_RETRIES,
        jitter,
    })
}

fn try_factor(a: &[f64], n: usize, jitter: f64, scale: f64) -> Option<Vec<f64>> {
    let tol = 16.0 * n as f64 * f64::EPSILON * scale;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let d = a[j * n + j] + jitter - dot(row_j, row_j);
        if d < -tol {
            return None;
        }
        if d <= tol {
            // column j of L stays zero
            continue;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let (upper, lower) = l.split_at_mut(i * n);
            lower[j] = (a[i * n + j] - dot(&lower[..j], &upper[j * n..j * n + j])) / ljj;
        }
    }
    Some(l)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x = L z` for a row-major lower-triangular `L`.
pub(crate) fn lower_mul(l: &[f64], n: usize, z: &[f64], x: &mut [f64]) {
    for i in 0..n {
        x[i] = dot(&l[i * n..i * n + i + 1], &z[..i + 1]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(l: &[f64], n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
            }
        }
        a
    }

    #[test]
    fn positive_definite() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky_psd(&a, 3, "test").unwrap();
        for (x, y) in reconstruct(&l, 3).iter().zip(&a) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(l[1], 0.0);
        assert_eq!(l[2], 0.0);
    }

    #[test]
    fn rank_one() {
        let a = [0.5; 9];
        let l = cholesky_psd(&a, 3, "test").unwrap();
        for (x, y) in reconstruct(&l, 3).iter().zip(&a) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(l[4], 0.0);
        assert_eq!(l[8], 0.0);
    }

    #[test]
    fn brownian_grid() {
        let n = 64;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (i.min(j) + 1) as f64;
            }
        }
        let l = cholesky_psd(&a, n, "test").unwrap();
        // L is the lower all-ones matrix
        for i in 0..n {
            for j in 0..n {
                let e = if j <= i { 1.0 } else { 0.0 };
                assert!((l[i * n + j] - e).abs() < 1e-12);
            }
        }
        let z: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut x = vec![0.0; n];
        lower_mul(&l, n, &z, &mut x);
        assert!((x[n - 1] - (n * (n - 1) / 2) as f64).abs() < 1e-9);
    }

    #[test]
    fn indefinite_reports_retries() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match cholesky_psd(&a, 2, "indefinite") {
            Err(Error::Decomposition { what, retries, jitter }) => {
                assert_eq!(what, "indefinite");
                assert_eq!(retries, MAX_RETRIES);
                assert!(jitter > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
