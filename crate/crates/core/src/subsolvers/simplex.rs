//! Dense two-phase simplex with Bland's rule for small LPs.
//!
//! Solves `max c' x` subject to `a_k' x <= b_k` and `x_i >= 0` for the flagged
//! indices. Unflagged variables are free and are split into two nonnegative
//! parts internally.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::qcqp::LinearIneq;

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// `c' x` at the returned point (meaningful only when `Optimal`).
    pub value: f64,
    pub status: LpStatus,
    pub pivots: usize,
}

pub fn solve_lp(objective: &[f64], ineqs: &[LinearIneq], nonneg: &[bool]) -> Result<LpSolution> {
    let n = objective.len();
    check_dim("solve_lp nonnegativity flags", n, nonneg.len())?;
    for li in ineqs {
        check_dim("solve_lp constraint", n, li.a.len())?;
    }
    let finite = objective.iter().all(|v| v.is_finite())
        && ineqs
            .iter()
            .all(|li| li.b.is_finite() && li.a.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::InvalidArgument("LP data must be finite".into()));
    }

    // column layout: structural (free variables contribute a +/- pair),
    // then one slack per row, then artificials for rows with negative rhs
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ns = 0;
    for &nn in nonneg {
        if nn {
            col_of.push((ns, None));
            ns += 1;
        } else {
            col_of.push((ns, Some(ns + 1)));
            ns += 2;
        }
    }
    let m = ineqs.len();
    let neg_rows: Vec<usize> = (0..m).filter(|&k| ineqs[k].b < 0.0).collect();
    let na = neg_rows.len();
    let ncols = ns + m + na;
    let rhs = ncols;

    let mut t = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art = 0;
    for (k, li) in ineqs.iter().enumerate() {
        let sign = if li.b < 0.0 { -1.0 } else { 1.0 };
        let row = &mut t[k];
        for (i, &(p, q)) in col_of.iter().enumerate() {
            row[p] = sign * li.a[i];
            if let Some(q) = q {
                row[q] = -sign * li.a[i];
            }
        }
        row[ns + k] = sign;
        row[rhs] = sign * li.b;
        if li.b < 0.0 {
            row[ns + m + art] = 1.0;
            basis[k] = ns + m + art;
            art += 1;
        } else {
            basis[k] = ns + k;
        }
    }

    let mut pivots = 0;
    if na > 0 {
        let mut cost = vec![0.0; ncols];
        for c in cost.iter_mut().skip(ns + m) {
            *c = 1.0;
        }
        let allowed = vec![true; ncols];
        // phase 1 is bounded below by zero, so it cannot report unbounded
        let _ = run_simplex(&mut t, &mut basis, &cost, &allowed, &mut pivots);
        let infeas: f64 = (0..m)
            .filter(|&k| basis[k] >= ns + m)
            .map(|k| t[k][rhs])
            .sum();
        let scale = 1.0 + ineqs.iter().fold(0.0f64, |s, li| s.max(li.b.abs()));
        if infeas > 1e-9 * scale {
            return Ok(LpSolution {
                x: vec![0.0; n],
                value: f64::NEG_INFINITY,
                status: LpStatus::Infeasible,
                pivots,
            });
        }
        // drive zero-level artificials out of the basis where possible
        for k in 0..m {
            if basis[k] < ns + m {
                continue;
            }
            if let Some(j) = (0..ns + m).find(|&j| t[k][j].abs() > PIVOT_TOL) {
                pivot(&mut t, &mut basis, k, j);
                pivots += 1;
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    for (i, &(p, q)) in col_of.iter().enumerate() {
        cost[p] = -objective[i];
        if let Some(q) = q {
            cost[q] = objective[i];
        }
    }
    let mut allowed = vec![true; ncols];
    for a in allowed.iter_mut().skip(ns + m) {
        *a = false;
    }
    let bounded = run_simplex(&mut t, &mut basis, &cost, &allowed, &mut pivots);

    let mut w = vec![0.0; ncols];
    for k in 0..m {
        w[basis[k]] = t[k][rhs];
    }
    let x: Vec<f64> = col_of
        .iter()
        .map(|&(p, q)| w[p] - q.map_or(0.0, |q| w[q]))
        .collect();
    let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        value,
        status: if bounded {
            LpStatus::Optimal
        } else {
            LpStatus::Unbounded
        },
        pivots,
    })
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (k, row) in t.iter_mut().enumerate() {
        if k == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            row[c] = 0.0;
        }
    }
    basis[r] = c;
}

/// Minimizes `cost' w` from the current basic feasible tableau.
/// Returns `false` when the objective is unbounded below.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    allowed: &[bool],
    pivots: &mut usize,
) -> bool {
    let m = t.len();
    let ncols = cost.len();
    let rhs = ncols;
    let mut is_basic = vec![false; ncols];
    for _ in 0..MAX_PIVOTS {
        is_basic.iter_mut().for_each(|b| *b = false);
        for &b in basis.iter() {
            is_basic[b] = true;
        }
        // Bland: first improving column
        let entering = (0..ncols).find(|&j| {
            if !allowed[j] || is_basic[j] {
                return false;
            }
            let reduced = cost[j] - (0..m).map(|k| cost[basis[k]] * t[k][j]).sum::<f64>();
            reduced < -1e-10 * (1.0 + cost[j].abs())
        });
        let Some(j) = entering else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..m {
            let a = t[k][j];
            if a > PIVOT_TOL {
                let ratio = t[k][rhs].max(0.0) / a;
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((kb, rb)) => {
                        if ratio < rb - 1e-14 * (1.0 + rb)
                            || (ratio <= rb + 1e-14 * (1.0 + rb) && basis[k] < basis[kb])
                        {
                            Some((k, ratio))
                        } else {
                            Some((kb, rb))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return false;
        };
        pivot(t, basis, r, j);
        *pivots += 1;
    }
    true
}
