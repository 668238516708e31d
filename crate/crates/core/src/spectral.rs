//! Cyclic Jacobi eigendecomposition and the PSD sign split built on it.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues with orthonormal eigenvectors. `vectors[k]` pairs with
/// `values[k]`; ordering is ascending in value.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is at rounding level.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    // v is row-major with eigenvectors in columns
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = m.frobenius_norm();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += a[p * n + q] * a[p * n + q];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = frob == 0.0 || n == 1;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // negligible relative to both diagonal entries: drop it
                if sweeps > 4
                    && app.abs() + 1e3 * apq.abs() == app.abs()
                    && aqq.abs() + 1e3 * apq.abs() == aqq.abs()
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        let off = off_norm(&a);
        converged = off <= 1e-15 * frob || off == 0.0;
    }

    if !converged {
        return Err(Error::EigenNotConverged {
            n,
            sweeps,
            off_norm: off_norm(&a),
            frob_norm: frob,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    Ok(SymEigen { values, vectors })
}

/// `M = plus - minus` with both parts positive semidefinite.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub plus: SymMatrix,
    pub minus: SymMatrix,
    pub eigvals: Vec<f64>,
    pub eigvecs: Vec<Vec<f64>>,
}

impl SpectralSplit {
    /// Largest eigenvalue of the minus part (equals its spectral norm).
    pub fn minus_norm(&self) -> f64 {
        self.eigvals
            .iter()
            .filter(|&&v| v < 0.0)
            .fold(0.0, |m, v| m.max(-v))
    }

    pub fn plus_norm(&self) -> f64 {
        self.eigvals
            .iter()
            .filter(|&&v| v >= 0.0)
            .fold(0.0, |m, &v| m.max(v))
    }

    pub fn is_convex(&self) -> bool {
        self.minus.is_zero()
    }
}

/// Sign split of the spectrum. Zero eigenvalues go to the plus part.
pub fn spectral_split(m: &SymMatrix) -> Result<SpectralSplit> {
    let eig = sym_eigen(m)?;
    let n = m.dim();
    let mut plus = vec![0.0; n * n];
    let mut minus = vec![0.0; n * n];
    for (val, vec) in eig.values.iter().zip(&eig.vectors) {
        let (target, w) = if *val >= 0.0 {
            (&mut plus, *val)
        } else {
            (&mut minus, -*val)
        };
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            let wi = w * vec[i];
            for j in i..n {
                target[i * n + j] += wi * vec[j];
            }
        }
    }
    let upper = |buf: &[f64]| SymMatrix::from_upper_fn(n, |i, j| buf[i * n + j]);
    Ok(SpectralSplit {
        plus: upper(&plus),
        minus: upper(&minus),
        eigvals: eig.values,
        eigvecs: eig.vectors,
    })
}

/// `max |eigenvalue|`.
pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let eig = sym_eigen(m)?;
    Ok(eig.values.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(m)?;
    Ok(eig.values.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymMatrix::from_upper_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_split() {
        let s = spectral_split(&SymMatrix::identity(2)).unwrap();
        assert_eq!(s.plus, SymMatrix::identity(2));
        assert!(s.minus.is_zero());
    }

    #[test]
    fn diagonal_sign_split() {
        let s = spectral_split(&SymMatrix::from_diag(&[1.0, -2.0])).unwrap();
        assert_eq!(s.plus, SymMatrix::from_diag(&[1.0, 0.0]));
        assert_eq!(s.minus, SymMatrix::from_diag(&[0.0, 2.0]));
    }

    #[test]
    fn zero_eigenvalue_goes_to_plus() {
        let s = spectral_split(&SymMatrix::from_diag(&[0.0, -1.0])).unwrap();
        assert!(s.plus.is_zero());
        assert_eq!(s.eigvals, vec![-1.0, 0.0]);
    }

    #[test]
    fn eigvecs_orthonormal_and_diagonalize() {
        let m = random_sym(7, 3);
        let eig = sym_eigen(&m).unwrap();
        for (i, vi) in eig.vectors.iter().enumerate() {
            for (j, vj) in eig.vectors.iter().enumerate() {
                let d = crate::linalg::dot(vi, vj);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-13);
            }
            let mv = m.mul_vec(vi);
            for k in 0..7 {
                assert!((mv[k] - eig.values[i] * vi[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&SymMatrix::zeros(3)).unwrap(), 0.0);
        assert!((spectral_norm(&SymMatrix::from_diag(&[3.0, -5.0])).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_eigenvalues() {
        let m = SymMatrix::from_rows(&[
            vec![2.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let eig = sym_eigen(&m).unwrap();
        assert_eq!(eig.values, vec![2.0, 2.0, 2.0]);
    }
}
