//! Cutting-plane maximization of the Lagrangian dual of the liquidation
//! problem.
//!
//! Only the two leverage constraints are dualized; the trading domain stays
//! in the inner problem. Because every matrix is block-diagonal per asset,
//! the Lagrangian minimization splits into `m` independent problems over the
//! triangle `{(y1_i, y2_i) : -x0_i <= y1_i + y2_i, y1_i <= 0, y2_i <= 0}`,
//! each solved in closed form. The outer loop is Kelley's method on the
//! dual: a small LP over the cuts collected so far proposes multipliers, the
//! Lagrangian at those multipliers yields a new cut, and the loop ends when
//! the LP value meets the dual function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liquidation::{build_qcqp, LiquidationParams};
use crate::qcqp::{is_feasible, LinearIneq, QcqpInstance};
use crate::subsolvers::{solve_lp, triangle2d_min, LpStatus, SolveStatus, StatusKind, Triangle2dProblem};

/// Objective and constraint values at a Lagrangian minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub fval: f64,
    pub gval: f64,
    pub hval: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CutPlaneOptions {
    /// Relative tolerance on `z - theta`.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on both multipliers, keeping every restricted LP bounded.
    pub bound: f64,
    /// Constraint tolerance for accepting a Lagrangian minimizer as feasible.
    pub feas_tol: f64,
}

impl Default for CutPlaneOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            bound: 1e6,
            feas_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutPlaneResult {
    pub t1: f64,
    pub t2: f64,
    /// Best dual function value found.
    pub dual_value: f64,
    /// Best feasible point seen; the half-sale plan is always a candidate.
    pub feasible_point: Option<Vec<f64>>,
    pub feasible_value: Option<f64>,
    pub iterations: usize,
    /// `(z^k, theta^k)` for every iteration.
    pub trace: Vec<(f64, f64)>,
    pub cuts: Vec<Cut>,
    pub status: SolveStatus,
}

/// Lagrangian `f + t1 g + t2 h` of the liquidation instance.
fn lagrangian_parts(inst: &QcqpInstance, m: usize, t1: f64, t2: f64) -> (Vec<Triangle2dProblem>, f64) {
    let lag = inst
        .objective
        .add_scaled(t1, &inst.constraints[0])
        .add_scaled(t2, &inst.constraints[1]);
    let probs = (0..m)
        .map(|i| {
            let j = m + i;
            Triangle2dProblem {
                h: [
                    [lag.quad.get(i, i), lag.quad.get(i, j)],
                    [lag.quad.get(j, i), lag.quad.get(j, j)],
                ],
                b: [-lag.lin[i], -lag.lin[j]],
                x0i: -inst.lower[i],
            }
        })
        .collect();
    (probs, lag.constant)
}

/// Minimizes the Lagrangian over the trading domain, returning the dual
/// function value and the minimizer.
pub fn lagrangian_min(p: &LiquidationParams, t1: f64, t2: f64) -> Result<(f64, Vec<f64>)> {
    let inst = build_qcqp(p)?;
    lagrangian_min_on(&inst, p.m, t1, t2)
}

fn lagrangian_min_on(inst: &QcqpInstance, m: usize, t1: f64, t2: f64) -> Result<(f64, Vec<f64>)> {
    if !(t1 >= 0.0 && t2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "multipliers must be nonnegative, got ({t1}, {t2})"
        )));
    }
    let (probs, constant) = lagrangian_parts(inst, m, t1, t2);
    let mut y = vec![0.0; 2 * m];
    let mut theta = constant;
    for (i, pr) in probs.iter().enumerate() {
        let (yi, v) = triangle2d_min(pr);
        y[i] = yi[0];
        y[m + i] = yi[1];
        theta += v;
    }
    Ok((theta, y))
}

/// Solves `max z` subject to `z <= f_k + t1 g_k + t2 h_k` for every cut and
/// `0 <= t1, t2 <= bound`. Returns `(z, t1, t2, status)`.
pub fn restricted_dual(cuts: &[Cut], bound: f64) -> Result<(f64, f64, f64, SolveStatus)> {
    if cuts.is_empty() {
        return Err(Error::InvalidArgument("restricted dual needs at least one cut".into()));
    }
    let mut rows: Vec<LinearIneq> = cuts
        .iter()
        .map(|c| LinearIneq {
            a: vec![1.0, -c.gval, -c.hval],
            b: c.fval,
        })
        .collect();
    rows.push(LinearIneq {
        a: vec![0.0, 1.0, 0.0],
        b: bound,
    });
    rows.push(LinearIneq {
        a: vec![0.0, 0.0, 1.0],
        b: bound,
    });
    let sol = solve_lp(&[1.0, 0.0, 0.0], &rows, &[false, true, true])?;
    let status = match sol.status {
        LpStatus::Optimal => SolveStatus::optimal(),
        other => SolveStatus::new(
            StatusKind::NumericalFailure,
            format!("restricted dual LP reported {other:?}"),
        ),
    };
    let t1 = sol.x[1].clamp(0.0, bound);
    let t2 = sol.x[2].clamp(0.0, bound);
    // recompute z from the cuts so it is exactly the LP's envelope value
    let z = cuts
        .iter()
        .map(|c| c.fval + t1 * c.gval + t2 * c.hval)
        .fold(f64::INFINITY, f64::min);
    Ok((z, t1, t2, status))
}

pub fn run_cutplane(p: &LiquidationParams, opts: &CutPlaneOptions) -> Result<CutPlaneResult> {
    let inst = build_qcqp(p)?;
    let m = p.m;
    let make_cut = |y: Vec<f64>| Cut {
        fval: inst.objective.value(&y),
        gval: inst.constraints[0].value(&y),
        hval: inst.constraints[1].value(&y),
        y,
    };

    let y0 = p.half_sale_point();
    if !is_feasible(&inst, &y0, opts.feas_tol) {
        return Err(Error::Precondition(
            "half-sale plan (-x0/2, -x0/2) is infeasible; check the leverage assumptions".into(),
        ));
    }
    let first = make_cut(y0.clone());
    let mut best_feasible = (first.fval, y0);
    let mut cuts = vec![first];
    let mut trace = Vec::new();
    let mut best_dual = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut status = SolveStatus::new(
        StatusKind::IterLimit,
        format!("{} iterations without closing the dual gap", opts.max_iter),
    );
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let (z, t1, t2, lp_status) = restricted_dual(&cuts, opts.bound)?;
        if !lp_status.is_optimal() {
            status = lp_status;
            break;
        }
        let (theta, y) = lagrangian_min_on(&inst, m, t1, t2)?;
        trace.push((z, theta));
        if theta > best_dual.0 {
            best_dual = (theta, t1, t2);
        }
        let cut = make_cut(y);
        if cut.fval < best_feasible.0 && is_feasible(&inst, &cut.y, opts.feas_tol) {
            best_feasible = (cut.fval, cut.y.clone());
        }
        if z <= theta + opts.tol * (1.0 + z.abs()) {
            status = SolveStatus::optimal();
            break;
        }
        cuts.push(cut);
    }

    Ok(CutPlaneResult {
        t1: best_dual.1,
        t2: best_dual.2,
        dual_value: best_dual.0,
        feasible_point: Some(best_feasible.1),
        feasible_value: Some(best_feasible.0),
        iterations,
        trace,
        cuts,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(f: f64, g: f64, h: f64) -> Cut {
        Cut {
            fval: f,
            gval: g,
            hval: h,
            y: vec![],
        }
    }

    #[test]
    fn single_cut_with_negative_slopes() {
        let (z, t1, t2, st) = restricted_dual(&[cut(-2.0, -1.0, -3.0)], 1e6).unwrap();
        assert!(st.is_optimal());
        assert_eq!((t1, t2), (0.0, 0.0));
        assert_eq!(z, -2.0);
    }

    #[test]
    fn zero_bound_pins_multipliers() {
        let cuts = [cut(3.0, 1.0, 1.0), cut(1.0, 5.0, -2.0), cut(2.0, -1.0, 4.0)];
        let (z, t1, t2, _) = restricted_dual(&cuts, 0.0).unwrap();
        assert_eq!((t1, t2), (0.0, 0.0));
        assert_eq!(z, 1.0);
    }

    #[test]
    fn negative_multiplier_rejected() {
        let inst = QcqpInstance::new(
            crate::qcqp::QuadForm::constant_form(2, 0.0),
            vec![
                crate::qcqp::QuadForm::constant_form(2, -1.0),
                crate::qcqp::QuadForm::constant_form(2, -1.0),
            ],
            vec![-1.0; 2],
            vec![0.0; 2],
            vec![],
        )
        .unwrap();
        assert!(lagrangian_min_on(&inst, 1, -1.0, 0.0).is_err());
        // constant Lagrangian: theta is the constant, minimizer the origin
        let (theta, y) = lagrangian_min_on(&inst, 1, 1.0, 2.0).unwrap();
        assert_eq!(theta, -3.0);
        assert_eq!(y, vec![0.0, 0.0]);
    }
}
