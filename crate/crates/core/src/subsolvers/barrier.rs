//! Log-barrier interior-point method for convex QCQPs.
//!
//! Variables whose box has (numerically) zero width are substituted out
//! first. A strictly feasible start comes from the caller or from a phase-1
//! problem that minimizes the largest constraint residual. When phase 1 shows
//! the feasible set has empty interior but is nonempty up to the tolerance,
//! every inequality is relaxed by a fraction of `tol` so the barrier has room
//! to work; the returned point then satisfies the original constraints to
//! within `tol`.
//!
//! Centering uses Newton steps with an exact line search: along a direction
//! every constraint is a scalar quadratic, so the barrier restricted to the
//! line is cheap to evaluate and its derivative root is bracketed by the first
//! constraint crossing.

use log::trace;

use super::{SolveStatus, StatusKind};
use crate::linalg::{dot, norm2, solve_spd};
use crate::qcqp::{max_violation, QcqpInstance, QuadForm};
use crate::spectral::min_eigenvalue;

/// Squared Newton decrement below which a centering round counts as done.
pub const RECENTER_DECREMENT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Feasibility and stationarity tolerance.
    pub tol: f64,
    /// Target for the absolute duality gap `terms / t`.
    pub gap_tol: f64,
    pub max_outer: usize,
    /// Newton steps per centering round.
    pub max_newton: usize,
    /// Extra centering rounds at the same barrier parameter when a round
    /// ends with the Newton decrement above `RECENTER_DECREMENT`.
    pub max_recenter: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    pub psd_tol: f64,
    pub check_convexity: bool,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            gap_tol: 1e-9,
            max_outer: 80,
            max_newton: 100,
            max_recenter: 20,
            mu: 10.0,
            psd_tol: 1e-8,
            check_convexity: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub y: Vec<f64>,
    /// Objective at `y`.
    pub value: f64,
    /// Lagrangian lower bound on the optimal value (`value - terms / t`),
    /// certified only for `Optimal` status and `-inf` otherwise.
    pub dual_bound: f64,
    pub status: SolveStatus,
    /// Stationarity residual `|grad f + sum z_i grad g_i|`.
    pub kkt_residual: f64,
    pub max_violation: f64,
    /// Multiplier estimates for the quadratic constraints, in input order.
    pub multipliers: Vec<f64>,
    pub newton_steps: usize,
}

pub fn solve_convex_qcqp(inst: &QcqpInstance, opts: &BarrierOptions) -> ConvexSolution {
    solve_convex_qcqp_from(inst, None, opts)
}

/// As [`solve_convex_qcqp`], trying `start` first as the initial interior point.
pub fn solve_convex_qcqp_from(
    inst: &QcqpInstance,
    start: Option<&[f64]>,
    opts: &BarrierOptions,
) -> ConvexSolution {
    let n = inst.dim();
    let fail = |kind: StatusKind, msg: String, y: Vec<f64>| {
        let value = if y.len() == n {
            inst.objective.value(&y)
        } else {
            f64::NAN
        };
        let viol = max_violation(inst, &y).unwrap_or(f64::INFINITY);
        ConvexSolution {
            y,
            value,
            dual_bound: f64::NEG_INFINITY,
            status: SolveStatus::new(kind, msg),
            kkt_residual: f64::INFINITY,
            max_violation: viol,
            multipliers: vec![0.0; inst.constraints.len()],
            newton_steps: 0,
        }
    };

    if let Err(e) = inst.validate() {
        return fail(StatusKind::NumericalFailure, e.to_string(), vec![]);
    }
    if opts.check_convexity {
        if let Some(msg) = convexity_violation(inst, opts.psd_tol) {
            return fail(StatusKind::NumericalFailure, msg, inst.box_midpoint());
        }
    }

    let fixed: Vec<bool> = (0..n)
        .map(|i| {
            let (l, u) = (inst.lower[i], inst.upper[i]);
            u - l <= 1e-12 * (1.0 + l.abs() + u.abs())
        })
        .collect();
    let mut template = inst.box_midpoint();
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();

    if free.is_empty() {
        let viol = max_violation(inst, &template).unwrap_or(f64::INFINITY);
        let value = inst.objective.value(&template);
        let status = if viol <= opts.tol {
            SolveStatus::optimal()
        } else {
            SolveStatus::new(
                StatusKind::Infeasible,
                format!("all variables fixed and max residual {viol:.3e} exceeds tolerance"),
            )
        };
        return ConvexSolution {
            y: template,
            value,
            dual_bound: if status.is_optimal() { value } else { f64::INFINITY },
            status,
            kkt_residual: 0.0,
            max_violation: viol,
            multipliers: vec![0.0; inst.constraints.len()],
            newton_steps: 0,
        };
    }

    let mut prob = Problem::reduce(inst, &free, &template);
    let nq = inst.constraints.len();
    let mut newton_steps = 0;

    let warm = start.and_then(|s| {
        if s.len() != n {
            return None;
        }
        let x: Vec<f64> = free.iter().map(|&i| s[i]).collect();
        prob.strictly_feasible(&x).then_some(x)
    });

    let x0 = match warm {
        Some(x) => x,
        None if prob.ineqs.is_empty() => prob.box_center(),
        None => {
            let p1 = phase_one(&prob, opts);
            newton_steps += p1.newton_steps;
            match p1.outcome {
                PhaseOne::Interior => p1.x,
                PhaseOne::Degenerate(s_star) => {
                    let shift = s_star.max(0.0) + 0.25 * opts.tol;
                    trace!("phase 1: empty interior (s* = {s_star:.3e}), relaxing by {shift:.3e}");
                    for ineq in prob.ineqs.iter_mut() {
                        ineq.c -= shift;
                    }
                    p1.x
                }
                PhaseOne::Infeasible(s_lb) => {
                    for (k, &i) in free.iter().enumerate() {
                        template[i] = p1.x[k];
                    }
                    return fail(
                        StatusKind::Infeasible,
                        format!("phase 1 certifies max residual >= {s_lb:.3e}"),
                        template,
                    );
                }
            }
        }
    };

    let terms = prob.barrier_terms() as f64;
    let t0 = prob.initial_t();
    let run = prob.run(x0, t0, opts, opts.gap_tol, &mut |_, _, _| false);
    newton_steps += run.newton_steps;

    for (k, &i) in free.iter().enumerate() {
        template[i] = run.x[k];
    }
    let y = template;
    let value = inst.objective.value(&y);
    let gap = terms / run.t;

    // stationarity of the Lagrangian with barrier multiplier estimates
    let kkt = prob.stationarity(&run.x, run.t);
    let grad_norm = norm2(&prob.obj_grad(&run.x));
    let multipliers: Vec<f64> = (0..nq)
        .map(|j| 1.0 / (run.t * (-prob.ineqs[j].value(&run.x))))
        .collect();
    let viol = max_violation(inst, &y).unwrap_or(f64::INFINITY);

    let status = if !run.converged {
        SolveStatus::new(
            StatusKind::IterLimit,
            format!("duality gap {gap:.3e} after {} outer steps", run.outer),
        )
    } else if viol > opts.tol {
        SolveStatus::new(
            StatusKind::NumericalFailure,
            format!("max residual {viol:.3e} exceeds tolerance"),
        )
    } else if kkt > opts.tol * (1.0 + grad_norm) {
        SolveStatus::new(
            StatusKind::NumericalFailure,
            format!("stationarity residual {kkt:.3e}"),
        )
    } else {
        SolveStatus::optimal()
    };

    ConvexSolution {
        y,
        value,
        dual_bound: if status.is_optimal() { value - gap } else { f64::NEG_INFINITY },
        status,
        kkt_residual: kkt,
        max_violation: viol,
        multipliers,
        newton_steps,
    }
}

fn convexity_violation(inst: &QcqpInstance, psd_tol: f64) -> Option<String> {
    let check = |qf: &QuadForm, what: String| -> Option<String> {
        if qf.quad.is_zero() {
            return None;
        }
        let scale = qf.quad.max_abs().max(1.0);
        match min_eigenvalue(&qf.quad) {
            Ok(ev) if ev >= -psd_tol * scale => None,
            Ok(ev) => Some(format!("{what} is not PSD (min eigenvalue {ev:.3e})")),
            Err(e) => Some(format!("{what}: {e}")),
        }
    };
    check(&inst.objective, "objective matrix".into()).or_else(|| {
        inst.constraints
            .iter()
            .enumerate()
            .find_map(|(j, c)| check(c, format!("constraint {j} matrix")))
    })
}

/// `x' P x + lin' x + c <= 0` in reduced coordinates.
#[derive(Debug, Clone)]
struct Ineq {
    quad: Option<Vec<f64>>,
    lin: Vec<f64>,
    c: f64,
}

impl Ineq {
    fn value(&self, x: &[f64]) -> f64 {
        let q = self.quad.as_ref().map_or(0.0, |p| dense_quad(p, x));
        q + dot(&self.lin, x) + self.c
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.lin);
        if let Some(p) = &self.quad {
            let n = x.len();
            for i in 0..n {
                out[i] += 2.0 * dot(&p[i * n..(i + 1) * n], x);
            }
        }
    }
}

fn dense_quad(p: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| x[i] * dot(&p[i * n..(i + 1) * n], x)).sum()
}

fn reduce_form(qf: &QuadForm, free: &[usize], full: &[f64], fixed: &[usize]) -> Ineq {
    let nf = free.len();
    let quad = if qf.quad.is_zero() {
        None
    } else {
        let mut p = vec![0.0; nf * nf];
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                p[a * nf + b] = qf.quad.get(i, j);
            }
        }
        p.iter().any(|&v| v != 0.0).then_some(p)
    };
    let mut lin: Vec<f64> = free.iter().map(|&i| qf.lin[i]).collect();
    let mut c = qf.constant;
    for &k in fixed {
        c += qf.lin[k] * full[k];
        for &l in fixed {
            c += full[k] * qf.quad.get(k, l) * full[l];
        }
        for (a, &i) in free.iter().enumerate() {
            lin[a] += 2.0 * qf.quad.get(i, k) * full[k];
        }
    }
    Ineq { quad, lin, c }
}

enum PhaseOne {
    Interior,
    Degenerate(f64),
    Infeasible(f64),
}

struct PhaseOneResult {
    x: Vec<f64>,
    outcome: PhaseOne,
    newton_steps: usize,
}

/// `min s` subject to `g_i(x) - s <= 0` and the box on `x`.
fn phase_one(prob: &Problem, opts: &BarrierOptions) -> PhaseOneResult {
    const INTERIOR_MARGIN: f64 = 1e-9;
    let n = prob.n;
    let xc = prob.box_center();
    let max_res = |x: &[f64]| {
        prob.ineqs
            .iter()
            .map(|g| g.value(&x[..n]))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let start_res = max_res(&xc);
    if start_res < -INTERIOR_MARGIN {
        return PhaseOneResult {
            x: xc,
            outcome: PhaseOne::Interior,
            newton_steps: 0,
        };
    }

    let ineqs = prob
        .ineqs
        .iter()
        .map(|g| {
            let quad = g.quad.as_ref().map(|p| {
                let mut q = vec![0.0; (n + 1) * (n + 1)];
                for i in 0..n {
                    q[i * (n + 1)..i * (n + 1) + n].copy_from_slice(&p[i * n..(i + 1) * n]);
                }
                q
            });
            let mut lin = g.lin.clone();
            lin.push(-1.0);
            Ineq { quad, lin, c: g.c }
        })
        .collect();
    let mut lo = prob.lo.clone();
    let mut hi = prob.hi.clone();
    lo.push(f64::NEG_INFINITY);
    hi.push(f64::INFINITY);
    let mut obj_lin = vec![0.0; n + 1];
    obj_lin[n] = 1.0;
    let p1 = Problem {
        n: n + 1,
        obj_quad: None,
        obj_lin,
        ineqs,
        lo,
        hi,
    };

    let mut x = xc;
    x.push(start_res + 1.0 + 0.1 * start_res.abs());
    let terms = p1.barrier_terms() as f64;
    let infeasible_at = 0.5 * opts.tol;
    let run = p1.run(
        x,
        1.0,
        opts,
        1e-3 * opts.tol,
        &mut |x: &[f64], t: f64, centered: bool| {
            max_res(x) < -INTERIOR_MARGIN || (centered && x[n] - terms / t > infeasible_at)
        },
    );
    let s_star = max_res(&run.x);
    let s_lb = run.x[n] - terms / run.t;
    let mut x = run.x;
    x.truncate(n);
    let outcome = if s_star < -INTERIOR_MARGIN {
        PhaseOne::Interior
    } else if s_lb > infeasible_at || s_star > infeasible_at {
        PhaseOne::Infeasible(s_lb.max(0.0))
    } else {
        PhaseOne::Degenerate(s_star)
    };
    PhaseOneResult {
        x,
        outcome,
        newton_steps: run.newton_steps,
    }
}

struct Problem {
    n: usize,
    obj_quad: Option<Vec<f64>>,
    obj_lin: Vec<f64>,
    ineqs: Vec<Ineq>,
    /// Infinite entries carry no barrier term.
    lo: Vec<f64>,
    hi: Vec<f64>,
}

struct Run {
    x: Vec<f64>,
    t: f64,
    outer: usize,
    newton_steps: usize,
    converged: bool,
}

impl Problem {
    fn reduce(inst: &QcqpInstance, free: &[usize], full: &[f64]) -> Self {
        let n = inst.dim();
        let free_set: Vec<bool> = {
            let mut v = vec![false; n];
            for &i in free {
                v[i] = true;
            }
            v
        };
        let fixed: Vec<usize> = (0..n).filter(|&i| !free_set[i]).collect();
        let obj = reduce_form(&inst.objective, free, full, &fixed);
        let mut ineqs: Vec<Ineq> = inst
            .constraints
            .iter()
            .map(|c| reduce_form(c, free, full, &fixed))
            .collect();
        for li in &inst.linear_ineqs {
            let lin: Vec<f64> = free.iter().map(|&i| li.a[i]).collect();
            let c = fixed.iter().map(|&k| li.a[k] * full[k]).sum::<f64>() - li.b;
            ineqs.push(Ineq {
                quad: None,
                lin,
                c,
            });
        }
        Self {
            n: free.len(),
            obj_quad: obj.quad,
            obj_lin: obj.lin,
            ineqs,
            lo: free.iter().map(|&i| inst.lower[i]).collect(),
            hi: free.iter().map(|&i| inst.upper[i]).collect(),
        }
    }

    fn barrier_terms(&self) -> usize {
        self.ineqs.len()
            + self.lo.iter().filter(|v| v.is_finite()).count()
            + self.hi.iter().filter(|v| v.is_finite()).count()
    }

    fn box_center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Barrier weight heuristic depending on the data only, so repeated
    /// solves of the same problem follow the same central path.
    fn initial_t(&self) -> f64 {
        let radius = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, u)| l.abs().max(u.abs()))
            .fold(0.0, f64::max)
            .max(1e-12);
        let quad_scale = self
            .obj_quad
            .as_ref()
            .map_or(0.0, |p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let lin_scale = self.obj_lin.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = 1.0 + quad_scale * radius * radius * self.n as f64 + lin_scale * radius;
        (self.barrier_terms() as f64 / scale).clamp(1e-6, 1e6)
    }

    fn obj_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut g = self.obj_lin.clone();
        if let Some(p) = &self.obj_quad {
            for i in 0..n {
                g[i] += 2.0 * dot(&p[i * n..(i + 1) * n], x);
            }
        }
        g
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        (0..self.n).all(|i| x[i] > self.lo[i] && x[i] < self.hi[i])
            && self.ineqs.iter().all(|g| g.value(x) < 0.0)
    }

    /// Gradient and Hessian of `t f(x) - sum log(-g_i(x)) - box terms`.
    fn newton_system(&self, x: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut h = vec![0.0; n * n];
        let mut g = self.obj_grad(x);
        for v in g.iter_mut() {
            *v *= t;
        }
        if let Some(p) = &self.obj_quad {
            for (hv, pv) in h.iter_mut().zip(p) {
                *hv += 2.0 * t * pv;
            }
        }
        let mut gi = vec![0.0; n];
        for ineq in &self.ineqs {
            let f = ineq.value(x);
            let w = 1.0 / (-f);
            ineq.grad_into(x, &mut gi);
            for i in 0..n {
                g[i] += w * gi[i];
            }
            if let Some(p) = &ineq.quad {
                for (hv, pv) in h.iter_mut().zip(p) {
                    *hv += 2.0 * w * pv;
                }
            }
            let w2 = w * w;
            for i in 0..n {
                let a = w2 * gi[i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    h[i * n + j] += a * gi[j];
                }
            }
        }
        for i in 0..n {
            if self.lo[i].is_finite() {
                let r = x[i] - self.lo[i];
                g[i] -= 1.0 / r;
                h[i * n + i] += 1.0 / (r * r);
            }
            if self.hi[i].is_finite() {
                let r = self.hi[i] - x[i];
                g[i] += 1.0 / r;
                h[i * n + i] += 1.0 / (r * r);
            }
        }
        (g, h)
    }

    /// Lagrangian stationarity residual at `x`.
    ///
    /// The barrier estimates `1 / (t * -g_i)` lose relative accuracy when
    /// `g_i` is computed by cancellation next to an active constraint, so the
    /// multipliers of the nearly active terms are also refit by least squares
    /// and the smaller of the two residuals is reported.
    fn stationarity(&self, x: &[f64], t: f64) -> f64 {
        let n = self.n;
        let (g, _) = self.newton_system(x, t);
        let barrier_res = norm2(&g) / t;

        let grad_f = self.obj_grad(x);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut gi = vec![0.0; n];
        let cutoff = 1e-8 * (1.0 + norm2(&grad_f));
        for ineq in &self.ineqs {
            let z = 1.0 / (t * (-ineq.value(x)));
            if z >= cutoff {
                ineq.grad_into(x, &mut gi);
                cols.push(gi.clone());
                weights.push(z);
            }
        }
        for i in 0..n {
            for (bound, sign) in [(self.lo[i], -1.0), (self.hi[i], 1.0)] {
                if !bound.is_finite() {
                    continue;
                }
                let z = 1.0 / (t * (sign * (bound - x[i])));
                if z >= cutoff {
                    let mut e = vec![0.0; n];
                    e[i] = sign;
                    cols.push(e);
                    weights.push(z);
                }
            }
        }
        if cols.is_empty() || cols.len() > 4 * n + 8 {
            return barrier_res;
        }
        let k = cols.len();
        let mut normal = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for a in 0..k {
            rhs[a] = -dot(&cols[a], &grad_f);
            for b in a..k {
                let v = dot(&cols[a], &cols[b]);
                normal[a * k + b] = v;
                normal[b * k + a] = v;
            }
        }
        let refit = nnls_normal(&normal, &rhs, k).unwrap_or(weights);
        let mut r = grad_f;
        for (col, z) in cols.iter().zip(&refit) {
            for i in 0..n {
                r[i] += z * col[i];
            }
        }
        barrier_res.min(norm2(&r))
    }

    /// Scalar coefficients `(a, b, c)` of each barrier term along `x + s d`.
    fn line_terms(&self, x: &[f64], d: &[f64]) -> Vec<(f64, f64, f64)> {
        let n = self.n;
        let mut terms = Vec::with_capacity(self.ineqs.len() + 2 * n);
        let mut gi = vec![0.0; n];
        for ineq in &self.ineqs {
            let a = ineq.quad.as_ref().map_or(0.0, |p| dense_quad(p, d));
            ineq.grad_into(x, &mut gi);
            terms.push((a, dot(&gi, d), ineq.value(x)));
        }
        for i in 0..n {
            if d[i] == 0.0 {
                continue;
            }
            if self.lo[i].is_finite() {
                terms.push((0.0, -d[i], self.lo[i] - x[i]));
            }
            if self.hi[i].is_finite() {
                terms.push((0.0, d[i], x[i] - self.hi[i]));
            }
        }
        terms
    }

    /// Minimizes the barrier along `d` exactly (up to root-finding tolerance).
    fn line_search(&self, x: &[f64], d: &[f64], t: f64) -> f64 {
        let terms = self.line_terms(x, d);
        let a0 = self.obj_quad.as_ref().map_or(0.0, |p| dense_quad(p, d));
        let b0 = dot(&self.obj_grad(x), d);

        let s_max = terms
            .iter()
            .map(|&(a, b, c)| first_positive_root(a, b, c))
            .fold(f64::INFINITY, f64::min);

        let dphi = |s: f64| -> f64 {
            let mut v = t * (2.0 * a0 * s + b0);
            for &(a, b, c) in &terms {
                let q = (a * s + b) * s + c;
                v += (2.0 * a * s + b) / (-q);
            }
            v
        };
        let d2phi = |s: f64| -> f64 {
            let mut v = 2.0 * t * a0;
            for &(a, b, c) in &terms {
                let q = (a * s + b) * s + c;
                let dq = 2.0 * a * s + b;
                v += 2.0 * a / (-q) + dq * dq / (q * q);
            }
            v
        };

        let d0 = dphi(0.0);
        if !(d0 < 0.0) {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = s_max;
        if !hi.is_finite() {
            hi = 1.0;
            loop {
                let v = dphi(hi);
                if v >= 0.0 || !v.is_finite() {
                    break;
                }
                lo = hi;
                hi *= 2.0;
                if hi > 1e40 {
                    return hi;
                }
            }
        }
        let mut s = if hi > 1.0 { 1.0 } else { 0.5 * (lo + hi) };
        for _ in 0..200 {
            let v = dphi(s);
            if !v.is_finite() {
                hi = s;
                s = 0.5 * (lo + hi);
                continue;
            }
            if v.abs() <= 1e-13 * d0.abs() {
                break;
            }
            if v < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
            let h2 = d2phi(s);
            let mut next = s - v / h2;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            s = next;
        }
        s
    }

    /// Newton centering at fixed `t`. Returns `true` if `stop` fired.
    fn center(
        &self,
        x: &mut Vec<f64>,
        t: f64,
        max_newton: usize,
        decrement_tol: f64,
        newton_steps: &mut usize,
        stop: &mut dyn FnMut(&[f64], f64, bool) -> bool,
    ) -> Option<f64> {
        let n = self.n;
        let mut xn = vec![0.0; n];
        let mut last_decrement = f64::INFINITY;
        let mut decrement = f64::INFINITY;
        for _ in 0..max_newton {
            let (g, h) = self.newton_system(x, t);
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(d) = solve_spd(&h, n, &neg_g) else {
                break;
            };
            let lambda2 = -dot(&g, &d);
            decrement = lambda2;
            // stagnation at rounding level ends polishing too
            if !(lambda2 > decrement_tol) || lambda2 >= last_decrement && lambda2 < 1e-12 {
                break;
            }
            last_decrement = lambda2;
            let mut s = self.line_search(x, &d, t);
            if !(s > 0.0) {
                break;
            }
            // guard against rounding at the boundary
            let mut accepted = false;
            for _ in 0..60 {
                for i in 0..n {
                    xn[i] = x[i] + s * d[i];
                }
                if self.strictly_feasible(&xn) {
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
            let step = s * norm2(&d);
            std::mem::swap(x, &mut xn);
            *newton_steps += 1;
            if stop(x, t, false) {
                return None;
            }
            if step <= 1e-16 * (1.0 + norm2(x)) {
                break;
            }
        }
        Some(decrement)
    }

    /// Barrier path from a strictly feasible `x`. `stop` is polled after
    /// every Newton step and after every centering (third argument `true`).
    fn run(
        &self,
        mut x: Vec<f64>,
        t0: f64,
        opts: &BarrierOptions,
        gap_tol: f64,
        stop: &mut dyn FnMut(&[f64], f64, bool) -> bool,
    ) -> Run {
        let terms = self.barrier_terms() as f64;
        let mut t = t0;
        let mut newton_steps = 0;
        for outer in 0..opts.max_outer {
            let last = terms / t <= gap_tol;
            let decrement_tol = if last { 1e-24 } else { 1e-13 };
            let mut stopped = false;
            for _ in 0..=opts.max_recenter {
                match self.center(&mut x, t, opts.max_newton, decrement_tol, &mut newton_steps, stop) {
                    None => {
                        stopped = true;
                        break;
                    }
                    Some(dec) if dec <= RECENTER_DECREMENT => break,
                    Some(dec) => trace!("recentering at t = {t:.3e}, decrement {dec:.3e}"),
                }
            }
            if stopped || stop(&x, t, true) {
                return Run {
                    x,
                    t,
                    outer,
                    newton_steps,
                    converged: false,
                };
            }
            if last {
                return Run {
                    x,
                    t,
                    outer,
                    newton_steps,
                    converged: true,
                };
            }
            t *= opts.mu;
        }
        Run {
            x,
            t,
            outer: opts.max_outer,
            newton_steps,
            converged: false,
        }
    }
}

/// Lawson-Hanson nonnegative least squares `min |A z - b|, z >= 0`, given
/// the normal matrix `A' A` (`k x k`) and `A' b`.
fn nnls_normal(ata: &[f64], atb: &[f64], k: usize) -> Option<Vec<f64>> {
    let scale = (0..k).fold(0.0f64, |m, i| m.max(ata[i * k + i])).max(1e-300);
    let grad = |z: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| atb[i] - dot(&ata[i * k..(i + 1) * k], z))
            .collect()
    };
    let solve_on = |set: &[usize]| -> Option<Vec<f64>> {
        let p = set.len();
        let mut m = vec![0.0; p * p];
        let mut r = vec![0.0; p];
        for (a, &i) in set.iter().enumerate() {
            r[a] = atb[i];
            for (b, &j) in set.iter().enumerate() {
                m[a * p + b] = ata[i * k + j];
            }
        }
        solve_spd(&m, p, &r)
    };
    let mut z = vec![0.0; k];
    let mut passive = vec![false; k];
    for _ in 0..3 * k + 3 {
        let w = grad(&z);
        let Some(j) = (0..k)
            .filter(|&j| !passive[j] && w[j] > 1e-14 * scale)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        else {
            return Some(z);
        };
        passive[j] = true;
        for _ in 0..3 * k + 3 {
            let set: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sol = solve_on(&set)?;
            if sol.iter().all(|&v| v > 0.0) {
                for (a, &i) in set.iter().enumerate() {
                    z[i] = sol[a];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (a, &i) in set.iter().enumerate() {
                if sol[a] <= 0.0 {
                    alpha = alpha.min(z[i] / (z[i] - sol[a]));
                }
            }
            for (a, &i) in set.iter().enumerate() {
                z[i] += alpha * (sol[a] - z[i]);
                if z[i] <= 1e-300 {
                    z[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Some(z)
}

/// Smallest positive root of `a s^2 + b s + c` for `c < 0`, or `inf`.
fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b > 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sgn * disc.sqrt());
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { f64::INFINITY };
    [r1, r2]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::qcqp::LinearIneq;

    fn opts() -> BarrierOptions {
        BarrierOptions::default()
    }

    #[test]
    fn interior_minimum_of_norm() {
        let inst = QcqpInstance::new(
            QuadForm::new(SymMatrix::identity(2), vec![0.0; 2], 0.0).unwrap(),
            vec![],
            vec![-1.0; 2],
            vec![1.0; 2],
            vec![],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert!(sol.status.is_optimal(), "{}", sol.status);
        assert!(sol.y.iter().all(|v| v.abs() < 1e-6));
        assert!(sol.value.abs() < 1e-9);
        assert!(sol.dual_bound <= sol.value);
    }

    #[test]
    fn unconverged_runs_certify_no_bound() {
        let inst = QcqpInstance::new(
            QuadForm::linear(vec![1.0, 0.0], 0.0),
            vec![QuadForm::new(SymMatrix::identity(2), vec![0.0; 2], -1.0).unwrap()],
            vec![-2.0; 2],
            vec![2.0; 2],
            vec![],
        )
        .unwrap();
        for (max_outer, max_newton, max_recenter) in [(3, 100, 20), (80, 1, 0), (80, 2, 0), (80, 2, 50)] {
            let o = BarrierOptions {
                max_outer,
                max_newton,
                max_recenter,
                ..opts()
            };
            let sol = solve_convex_qcqp(&inst, &o);
            if sol.status.is_optimal() {
                assert!(sol.dual_bound <= -1.0 + 1e-9 && (sol.value + 1.0).abs() < 1e-6);
            } else {
                assert_eq!(sol.dual_bound, f64::NEG_INFINITY, "{}", sol.status);
            }
            if max_outer == 3 {
                assert_eq!(sol.status.kind, StatusKind::IterLimit);
            }
        }
    }

    #[test]
    fn linear_objective_on_unit_ball() {
        let inst = QcqpInstance::new(
            QuadForm::linear(vec![1.0, 0.0], 0.0),
            vec![QuadForm::new(SymMatrix::identity(2), vec![0.0; 2], -1.0).unwrap()],
            vec![-2.0; 2],
            vec![2.0; 2],
            vec![],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert!(sol.status.is_optimal(), "{}", sol.status);
        assert!((sol.y[0] + 1.0).abs() < 1e-6);
        assert!(sol.y[1].abs() < 1e-4);
        assert!((sol.value + 1.0).abs() < 1e-8);
        assert!((sol.multipliers[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn detects_infeasibility() {
        // y'y <= 1 and y1 >= 2 cannot both hold
        let inst = QcqpInstance::new(
            QuadForm::linear(vec![1.0, 1.0], 0.0),
            vec![QuadForm::new(SymMatrix::identity(2), vec![0.0; 2], -1.0).unwrap()],
            vec![-3.0; 2],
            vec![3.0; 2],
            vec![LinearIneq {
                a: vec![-1.0, 0.0],
                b: -2.0,
            }],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert_eq!(sol.status.kind, StatusKind::Infeasible);
    }

    #[test]
    fn rejects_nonconvex_input() {
        let inst = QcqpInstance::new(
            QuadForm::new(SymMatrix::from_diag(&[1.0, -1.0]), vec![0.0; 2], 0.0).unwrap(),
            vec![],
            vec![-1.0; 2],
            vec![1.0; 2],
            vec![],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert_eq!(sol.status.kind, StatusKind::NumericalFailure);
    }

    #[test]
    fn fixed_variables_are_substituted() {
        let inst = QcqpInstance::new(
            QuadForm::new(SymMatrix::identity(2), vec![0.0; 2], 0.0).unwrap(),
            vec![],
            vec![0.5, -1.0],
            vec![0.5, 1.0],
            vec![],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert!(sol.status.is_optimal());
        assert_eq!(sol.y[0], 0.5);
        assert!((sol.value - 0.25).abs() < 1e-9);
    }

    #[test]
    fn single_point_feasible_set() {
        // box [0,1]^2 with y1 + y2 >= 2 leaves only the corner (1,1)
        let inst = QcqpInstance::new(
            QuadForm::linear(vec![1.0, 2.0], 0.0),
            vec![],
            vec![0.0; 2],
            vec![1.0; 2],
            vec![LinearIneq {
                a: vec![-1.0, -1.0],
                b: -2.0,
            }],
        )
        .unwrap();
        let sol = solve_convex_qcqp(&inst, &opts());
        assert!(sol.status.is_optimal(), "{}", sol.status);
        assert!((sol.y[0] - 1.0).abs() < 1e-6 && (sol.y[1] - 1.0).abs() < 1e-6);
        assert!(sol.max_violation <= opts().tol);
        assert!(sol.dual_bound <= 3.0 + 1e-12);
    }

    #[test]
    fn positive_root_helper() {
        assert_eq!(first_positive_root(0.0, 2.0, -4.0), 2.0);
        assert_eq!(first_positive_root(0.0, -1.0, -4.0), f64::INFINITY);
        assert!((first_positive_root(1.0, 0.0, -4.0) - 2.0).abs() < 1e-15);
        assert!((first_positive_root(1.0, 3.0, -4.0) - 1.0).abs() < 1e-15);
        // concave with no crossing
        assert_eq!(first_positive_root(-1.0, 1.0, -4.0), f64::INFINITY);
    }
}
