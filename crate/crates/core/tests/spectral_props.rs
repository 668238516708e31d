use proptest::prelude::*;

use scobb::linalg::SymMatrix;
use scobb::spectral::{min_eigenvalue, spectral_norm, spectral_split};

fn sym_matrix() -> impl Strategy<Value = SymMatrix> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| {
            SymMatrix::from_upper_fn(n, |i, j| 0.5 * (v[i * n + j] + v[j * n + i]))
        })
    })
}

/// Smallest value of `x' M x` over unit vectors `x`, estimated by sampling.
fn sampled_min_rayleigh(m: &SymMatrix, samples: usize) -> f64 {
    let n = m.dim();
    let mut best = f64::INFINITY;
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        let nrm2: f64 = x.iter().map(|v| v * v).sum();
        if nrm2 > 1e-12 {
            best = best.min(m.quad(&x) / nrm2);
        }
    }
    best
}

proptest! {
    #[test]
    fn split_reconstructs_and_parts_are_psd(m in sym_matrix()) {
        let s = spectral_split(&m).unwrap();
        let scale = 1.0 + m.frobenius_norm();
        let rec = s.plus.add_scaled(-1.0, &s.minus);
        let err = rec.add_scaled(-1.0, &m).max_abs();
        prop_assert!(err <= 1e-10 * scale, "reconstruction error {err}");
        prop_assert!(min_eigenvalue(&s.plus).unwrap() >= -1e-10 * scale);
        prop_assert!(min_eigenvalue(&s.minus).unwrap() >= -1e-10 * scale);
        // plus and minus live on orthogonal eigenspaces
        let n = m.dim();
        let mut cross = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| s.plus.get(i, k) * s.minus.get(k, j)).sum();
                cross = cross.max(v.abs());
            }
        }
        prop_assert!(cross <= 1e-9 * scale * scale, "plus * minus = {cross}");
    }

    #[test]
    fn minus_norm_matches_rayleigh_bound(m in sym_matrix()) {
        let s = spectral_split(&m).unwrap();
        let sampled = sampled_min_rayleigh(&m, 2000);
        // sampling can only overestimate the smallest eigenvalue
        prop_assert!(sampled >= -s.minus_norm() - 1e-9 * (1.0 + m.frobenius_norm()));
        let norm = spectral_norm(&m).unwrap();
        prop_assert!(norm + 1e-9 >= s.minus_norm().max(s.plus_norm()));
        prop_assert!((norm - s.minus_norm().max(s.plus_norm())).abs() <= 1e-9 * (1.0 + norm));
    }
}
