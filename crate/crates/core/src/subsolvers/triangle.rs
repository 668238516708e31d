//! Closed-form minimization of a two-variable quadratic over the triangle
//! with vertices `O = (0, 0)`, `A = (-x0, 0)` and `B = (0, -x0)`.

use serde::{Deserialize, Serialize};

/// `min nu(y) = y' H y - b' y` over the triangle scaled by `x0i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle2dProblem {
    pub h: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub x0i: f64,
}

const DENOM_TOL: f64 = 1e-14;

impl Triangle2dProblem {
    pub fn value(&self, y: [f64; 2]) -> f64 {
        let h = &self.h;
        h[0][0] * y[0] * y[0] + 2.0 * h[0][1] * y[0] * y[1] + h[1][1] * y[1] * y[1]
            - self.b[0] * y[0]
            - self.b[1] * y[1]
    }

    /// Candidate minimizers in evaluation order: the three vertices, the
    /// clamped stationary point on each edge (OA, OB, AB) when that edge's
    /// curvature is not negligible, then the interior stationary point when
    /// `H` is positive definite and the point lies in the triangle.
    pub fn candidates(&self) -> Vec<[f64; 2]> {
        let x0 = self.x0i;
        let (h11, h12, h22) = (self.h[0][0], self.h[0][1], self.h[1][1]);
        let (b1, b2) = (self.b[0], self.b[1]);
        let clamp = |v: f64| v.clamp(-x0, 0.0);

        let mut out = vec![[0.0, 0.0], [-x0, 0.0], [0.0, -x0]];
        if (2.0 * h11).abs() > DENOM_TOL {
            out.push([clamp(b1 / (2.0 * h11)), 0.0]);
        }
        if (2.0 * h22).abs() > DENOM_TOL {
            out.push([0.0, clamp(b2 / (2.0 * h22))]);
        }
        let d_ab = 2.0 * (h11 + h22 - 2.0 * h12);
        if d_ab.abs() > DENOM_TOL {
            let y1 = clamp((b1 - b2 + 2.0 * x0 * (h12 - h22)) / d_ab);
            out.push([y1, -x0 - y1]);
        }
        let det = h11 * h22 - h12 * h12;
        if h11 > 0.0 && det > 0.0 {
            let y1 = 0.5 * (h22 * b1 - h12 * b2) / det;
            let y2 = 0.5 * (h11 * b2 - h12 * b1) / det;
            if y1 <= 0.0 && y2 <= 0.0 && y1 + y2 >= -x0 {
                out.push([y1, y2]);
            }
        }
        out
    }
}

/// Exact minimizer by candidate enumeration; the first minimal candidate wins.
pub fn triangle2d_min(p: &Triangle2dProblem) -> ([f64; 2], f64) {
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for y in p.candidates() {
        let v = p.value(y);
        if v < best.1 {
            best = (y, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(h: [[f64; 2]; 2], b: [f64; 2], x0i: f64) -> Triangle2dProblem {
        Triangle2dProblem { h, b, x0i }
    }

    #[test]
    fn convex_with_minimum_at_origin() {
        let (y, v) = triangle2d_min(&prob([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], 1.0));
        assert_eq!(y, [0.0, 0.0]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn concave_tie_goes_to_a() {
        let (y, v) = triangle2d_min(&prob([[-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], 1.0));
        assert_eq!(y, [-1.0, 0.0]);
        assert_eq!(v, -1.0);
    }

    #[test]
    fn stationary_point_on_hypotenuse() {
        let (y, v) = triangle2d_min(&prob([[1.0, 0.0], [0.0, 1.0]], [-1.0, -1.0], 1.0));
        assert!((y[0] + 0.5).abs() < 1e-15 && (y[1] + 0.5).abs() < 1e-15);
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_is_linear() {
        let (y, v) = triangle2d_min(&prob([[0.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 2.0));
        assert_eq!(y, [0.0, 0.0]);
        assert_eq!(v, 0.0);
        let (y, v) = triangle2d_min(&prob([[0.0, 0.0], [0.0, 0.0]], [0.0, 1.0], 2.0));
        assert_eq!(y, [0.0, 0.0]);
        assert_eq!(v, 0.0);
        let (y, _) = triangle2d_min(&prob([[0.0, 0.0], [0.0, 0.0]], [0.0, -1.0], 2.0));
        assert_eq!(y, [0.0, -2.0]);
    }

    #[test]
    fn candidates_stay_in_triangle() {
        let p = prob([[2.0, -3.0], [-3.0, 0.5]], [5.0, -7.0], 1.5);
        for y in p.candidates() {
            assert!(y[0] <= 1e-12 && y[1] <= 1e-12 && y[0] + y[1] >= -1.5 - 1e-12);
        }
    }
}
