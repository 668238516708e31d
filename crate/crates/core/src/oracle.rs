//! Exhaustive grid search over small boxes, used as an independent check of
//! the global solver.
//!
//! The grid contains both box endpoints in each coordinate and has spacing at
//! most `resolution`. Every point of the box lies within `r`, half the grid
//! cell diagonal, of some grid point, so a grid point is accepted as
//! "tolerantly feasible" when each constraint value is at most its Lipschitz
//! constant over the box times `r`. The tolerant minimum `v_tol` then
//! satisfies `v_tol <= f* + L_f r`, while any strictly feasible grid point
//! gives `f* <= v_strict`. Together they bracket the true optimum:
//! `v_tol - L_f r <= f* <= v_strict`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::qcqp::{QcqpInstance, QuadForm};

/// Largest dimension accepted by [`brute_force_oracle`].
pub const MAX_ORACLE_DIM: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best tolerantly feasible grid point and its objective value.
    pub y: Vec<f64>,
    pub value: f64,
    /// Best grid point satisfying every constraint exactly, if any.
    pub strict_y: Option<Vec<f64>>,
    pub strict_value: Option<f64>,
    /// Rigorous lower bound `value - L_f r` on the optimum.
    pub lower_bound: f64,
    /// Width of the bracket around the optimum (`strict_value - lower_bound`,
    /// or `L_f r` when no strictly feasible grid point exists).
    pub error_bound: f64,
    /// Half the grid cell diagonal.
    pub radius: f64,
    pub objective_lipschitz: f64,
    pub points: u64,
}

/// Upper bound on `|grad q(y)|` over the box.
fn lipschitz(qf: &QuadForm, lower: &[f64], upper: &[f64]) -> f64 {
    let n = qf.dim();
    let comp: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = qf.lin[i].abs();
            for j in 0..n {
                s += 2.0 * qf.quad.get(i, j).abs() * lower[j].abs().max(upper[j].abs());
            }
            s
        })
        .collect();
    norm2(&comp)
}

/// Restriction of a quadratic form to the last coordinate with the others
/// fixed: `a t^2 + b t + c`.
struct Slice {
    a: f64,
    b: f64,
    c: f64,
}

fn slice(qf: &QuadForm, head: &[f64]) -> Slice {
    let k = head.len();
    let mut c = qf.constant;
    let mut b = qf.lin[k];
    for i in 0..k {
        c += qf.lin[i] * head[i];
        let row = qf.quad.row(i);
        let mut s = 0.0;
        for j in 0..k {
            s += row[j] * head[j];
        }
        c += head[i] * s;
        b += 2.0 * row[k] * head[i];
    }
    Slice {
        a: qf.quad.get(k, k),
        b,
        c,
    }
}

pub fn brute_force_oracle(inst: &QcqpInstance, resolution: f64) -> Result<OracleResult> {
    inst.validate()?;
    let n = inst.dim();
    if n > MAX_ORACLE_DIM {
        return Err(Error::InvalidArgument(format!(
            "grid oracle supports at most {MAX_ORACLE_DIM} variables, got {n}"
        )));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }

    let counts: Vec<usize> = (0..n)
        .map(|i| {
            let w = inst.upper[i] - inst.lower[i];
            if w <= 0.0 {
                1
            } else {
                (w / resolution).ceil() as usize + 1
            }
        })
        .collect();
    let steps: Vec<f64> = (0..n)
        .map(|i| {
            if counts[i] <= 1 {
                0.0
            } else {
                (inst.upper[i] - inst.lower[i]) / (counts[i] - 1) as f64
            }
        })
        .collect();
    let coord = |i: usize, k: usize| -> f64 {
        if k + 1 == counts[i] {
            inst.upper[i]
        } else {
            inst.lower[i] + k as f64 * steps[i]
        }
    };
    let radius = 0.5 * norm2(&steps);
    let lf = lipschitz(&inst.objective, &inst.lower, &inst.upper);
    let tol_quad: Vec<f64> = inst
        .constraints
        .iter()
        .map(|c| lipschitz(c, &inst.lower, &inst.upper) * radius)
        .collect();
    let tol_lin: Vec<f64> = inst.linear_ineqs.iter().map(|li| norm2(&li.a) * radius).collect();

    let last = n - 1;
    let mut idx = vec![0usize; last];
    let mut head = vec![0.0; last];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_strict: Option<(f64, Vec<f64>)> = None;
    let mut points = 0u64;
    let mut quad_vals = vec![0.0; inst.constraints.len()];

    'outer: loop {
        for i in 0..last {
            head[i] = coord(i, idx[i]);
        }
        let fs = slice(&inst.objective, &head);
        let cs: Vec<Slice> = inst.constraints.iter().map(|c| slice(c, &head)).collect();
        let ls: Vec<(f64, f64)> = inst
            .linear_ineqs
            .iter()
            .map(|li| {
                let r: f64 = (0..last).map(|i| li.a[i] * head[i]).sum::<f64>() - li.b;
                (li.a[last], r)
            })
            .collect();
        for k in 0..counts[last] {
            let t = coord(last, k);
            points += 1;
            let mut tolerant = true;
            let mut strict = true;
            for (j, s) in cs.iter().enumerate() {
                let v = (s.a * t + s.b) * t + s.c;
                quad_vals[j] = v;
                if v > 0.0 {
                    strict = false;
                    if v > tol_quad[j] {
                        tolerant = false;
                        break;
                    }
                }
            }
            if !tolerant {
                continue;
            }
            for (j, &(a, r)) in ls.iter().enumerate() {
                let v = a * t + r;
                if v > 0.0 {
                    strict = false;
                    if v > tol_lin[j] {
                        tolerant = false;
                        break;
                    }
                }
            }
            if !tolerant {
                continue;
            }
            let f = (fs.a * t + fs.b) * t + fs.c;
            if best.as_ref().map_or(true, |(b, _)| f < *b) {
                let mut y = head.clone();
                y.push(t);
                best = Some((f, y));
            }
            if strict && best_strict.as_ref().map_or(true, |(b, _)| f < *b) {
                let mut y = head.clone();
                y.push(t);
                best_strict = Some((f, y));
            }
        }
        // odometer over the leading coordinates
        let mut i = last;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }

    let Some((value, y)) = best else {
        return Err(Error::Solver(
            "grid oracle found no feasible grid point (instance infeasible at this resolution)"
                .into(),
        ));
    };
    let lower_bound = value - lf * radius;
    let (strict_value, strict_y) = match best_strict {
        Some((v, y)) => (Some(v), Some(y)),
        None => (None, None),
    };
    let error_bound = strict_value.map_or(lf * radius, |s| s - lower_bound);
    Ok(OracleResult {
        y,
        value,
        strict_y,
        strict_value,
        lower_bound,
        error_bound,
        radius,
        objective_lipschitz: lf,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    #[test]
    fn collapsed_box_returns_the_point() {
        let inst = QcqpInstance::new(
            QuadForm::new(SymMatrix::identity(2), vec![1.0, 0.0], 0.0).unwrap(),
            vec![],
            vec![0.3, -0.2],
            vec![0.3, -0.2],
            vec![],
        )
        .unwrap();
        let r = brute_force_oracle(&inst, 0.1).unwrap();
        assert_eq!(r.y, vec![0.3, -0.2]);
        assert_eq!(r.points, 1);
        assert_eq!(r.error_bound, 0.0);
    }

    #[test]
    fn concave_one_dimensional() {
        let inst = QcqpInstance::new(
            QuadForm::new(SymMatrix::from_diag(&[-1.0]), vec![0.0], 0.0).unwrap(),
            vec![],
            vec![-1.0],
            vec![0.5],
            vec![],
        )
        .unwrap();
        let r = brute_force_oracle(&inst, 0.01).unwrap();
        assert_eq!(r.y, vec![-1.0]);
        assert_eq!(r.value, -1.0);
        assert!(r.lower_bound <= -1.0);
    }

    #[test]
    fn dimension_guard() {
        let inst = QcqpInstance::new(
            QuadForm::constant_form(5, 0.0),
            vec![],
            vec![0.0; 5],
            vec![1.0; 5],
            vec![],
        )
        .unwrap();
        assert!(brute_force_oracle(&inst, 0.5).is_err());
    }
}
