//! Two-period portfolio liquidation under leverage constraints.
//!
//! A fund holding `x0` units of `m` assets trades `y1` in the first period
//! and `y2` in the second (sales are negative). Trades move prices through a
//! permanent impact `Gamma` and a temporary impact `Lambda`, both diagonal.
//! After each period the liabilities-to-equity ratio must stay below
//! `rho1` and `rho2`. Between the periods a withdrawal shock `Delta` moves
//! `delta` from equity to liabilities with probability `pi`. The fund
//! maximizes expected second-period equity.
//!
//! Variables are stacked as `y = (y1, y2)` with `2m` entries. The constraint
//! set `D` is the box `-x0 <= y1, y2 <= 0` plus `y1 + y2 >= -x0` per asset.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SymMatrix};
use crate::qcqp::{is_feasible, LinearIneq, QcqpInstance, QuadForm};

/// Inputs of the liquidation model. `lambda` and `gamma` are the diagonals of
/// the temporary and permanent impact matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidationParams {
    pub m: usize,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub p0: Vec<f64>,
    pub x0: Vec<f64>,
    pub e0: f64,
    pub l0: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub pi: f64,
    pub delta: f64,
}

/// Equity and liabilities after a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodState {
    pub e: f64,
    pub l: f64,
    /// `l / e`, present only when `e > 0`.
    pub leverage: Option<f64>,
}

impl PeriodState {
    fn new(e: f64, l: f64) -> Self {
        Self {
            e,
            l,
            leverage: (e > 0.0).then(|| l / e),
        }
    }
}

impl LiquidationParams {
    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Err(Error::Validation("asset count m must be at least 1".into()));
        }
        check_dim("lambda", m, self.lambda.len())?;
        check_dim("gamma", m, self.gamma.len())?;
        check_dim("p0", m, self.p0.len())?;
        check_dim("x0", m, self.x0.len())?;
        let scalars = [
            ("e0", self.e0),
            ("l0", self.l0),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("pi", self.pi),
            ("delta", self.delta),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                Some(i) => Err(Error::Validation(format!(
                    "{name}[{i}] = {} must be positive and finite",
                    v[i]
                ))),
                None => Ok(()),
            }
        };
        positive("lambda", &self.lambda)?;
        positive("gamma", &self.gamma)?;
        positive("x0", &self.x0)?;
        if let Some(i) = self.p0.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("p0[{i}] must be finite")));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::Validation(format!("pi = {} must lie in [0, 1]", self.pi)));
        }
        if self.delta < 0.0 {
            return Err(Error::Validation(format!("delta = {} must be nonnegative", self.delta)));
        }
        let a1 = self.rho1 * self.e0 - self.l0;
        if a1 >= 0.0 {
            return Err(Error::Validation(format!(
                "first leverage assumption violated: rho1*e0 - l0 = {a1:.6e} must be negative"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// Per-asset value of `rho2 (lambda - gamma) + (lambda + gamma)`, the
    /// curvature of the shock-capacity function along `y1 = y2`.
    pub fn k_coefficient(&self, i: usize) -> f64 {
        self.rho2 * (self.lambda[i] - self.gamma[i]) + self.lambda[i] + self.gamma[i]
    }

    /// The full-sale point `(-x0/2, -x0/2)` stacked.
    pub fn half_sale_point(&self) -> Vec<f64> {
        self.x0.iter().chain(&self.x0).map(|v| -0.5 * v).collect()
    }
}

/// Builds the `2m`-variable instance: objective `-E[e2]`, constraints
/// `l1 - rho1 e1 <= 0` and `l2 - rho2 e2 <= 0` (shock realized), and `D`.
pub fn build_qcqp(p: &LiquidationParams) -> Result<QcqpInstance> {
    p.validate()?;
    build_qcqp_unchecked(p)
}

pub(crate) fn build_qcqp_unchecked(p: &LiquidationParams) -> Result<QcqpInstance> {
    let m = p.m;
    let n = 2 * m;
    let (pi, r1, r2, d) = (p.pi, p.rho1, p.rho2, p.delta);

    let mut q0 = SymMatrix::zeros(n);
    let mut q1 = SymMatrix::zeros(n);
    let mut q2 = SymMatrix::zeros(n);
    let mut l0v = vec![0.0; n];
    let mut l1v = vec![0.0; n];
    let mut l2v = vec![0.0; n];
    for i in 0..m {
        let (lam, gam, x, pr) = (p.lambda[i], p.gamma[i], p.x0[i], p.p0[i]);
        let lm = lam - 0.5 * gam;
        let lp = lam + 0.5 * gam;
        q0.set(i, i, lm);
        q0.set(m + i, m + i, pi * lm);
        q0.set(i, m + i, -0.5 * pi * gam);
        l0v[i] = -gam * x;
        l0v[m + i] = -pi * gam * x;

        q1.set(i, i, r1 * lm + lp);
        l1v[i] = pr - r1 * gam * x;

        let t = lp + r2 * lm;
        q2.set(i, i, t);
        q2.set(m + i, m + i, t);
        q2.set(i, m + i, 0.5 * (1.0 - r2) * gam);
        l2v[i] = pr - r2 * gam * x;
        l2v[m + i] = pr - r2 * gam * x;
    }
    let objective = QuadForm::new(q0, l0v, pi * d - p.e0)?;
    let g = QuadForm::new(q1, l1v, p.l0 - r1 * p.e0)?;
    let h = QuadForm::new(q2, l2v, p.l0 - r2 * p.e0 + (r2 + 1.0) * d)?;

    let lower: Vec<f64> = p.x0.iter().chain(&p.x0).map(|v| -v).collect();
    let upper = vec![0.0; n];
    let linear_ineqs = (0..m)
        .map(|i| {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            a[m + i] = -1.0;
            LinearIneq { a, b: p.x0[i] }
        })
        .collect();
    QcqpInstance::new(objective, vec![g, h], lower, upper, linear_ineqs)
}

pub fn first_period_state(p: &LiquidationParams, y1: &[f64]) -> Result<PeriodState> {
    check_dim("first_period_state", p.m, y1.len())?;
    let mut e = p.e0;
    let mut l = p.l0;
    for i in 0..p.m {
        let (lam, gam, y) = (p.lambda[i], p.gamma[i], y1[i]);
        e += p.x0[i] * gam * y - (lam - 0.5 * gam) * y * y;
        l += p.p0[i] * y + (lam + 0.5 * gam) * y * y;
    }
    Ok(PeriodState::new(e, l))
}

/// State after both periods when the withdrawal is `shock`.
pub fn second_period_state(p: &LiquidationParams, y: &[f64], shock: f64) -> Result<PeriodState> {
    check_dim("second_period_state", 2 * p.m, y.len())?;
    let m = p.m;
    let mut e = p.e0 - shock;
    let mut l = p.l0 + shock;
    for i in 0..m {
        let (lam, gam) = (p.lambda[i], p.gamma[i]);
        let (a, b) = (y[i], y[m + i]);
        let sq = a * a + b * b;
        let cross = a * b;
        l += p.p0[i] * (a + b) + (lam + 0.5 * gam) * sq + gam * cross;
        e += p.x0[i] * gam * (a + b) - ((lam - 0.5 * gam) * sq - gam * cross);
    }
    Ok(PeriodState::new(e, l))
}

/// `(1 - pi) e1(y1) + pi e2(y, delta)`.
pub fn expected_equity(p: &LiquidationParams, y: &[f64]) -> Result<f64> {
    check_dim("expected_equity", 2 * p.m, y.len())?;
    let e1 = first_period_state(p, &y[..p.m])?.e;
    let e2 = second_period_state(p, y, p.delta)?.e;
    Ok((1.0 - p.pi) * e1 + p.pi * e2)
}

/// `G(y) = (rho2 Gamma x0 - p0)'(y1 + y2) - y' [[T, S], [S, T]] y`, the
/// shock-absorbing capacity of a trading plan.
pub fn capacity_function(p: &LiquidationParams, y: &[f64]) -> Result<f64> {
    check_dim("capacity_function", 2 * p.m, y.len())?;
    let m = p.m;
    let mut g = 0.0;
    for i in 0..m {
        let (lam, gam) = (p.lambda[i], p.gamma[i]);
        let t = p.rho2 * (lam - 0.5 * gam) + lam + 0.5 * gam;
        let s = 0.5 * (1.0 - p.rho2) * gam;
        let (a, b) = (y[i], y[m + i]);
        g += (p.rho2 * gam * p.x0[i] - p.p0[i]) * (a + b) - (t * (a * a + b * b) + 2.0 * s * a * b);
    }
    Ok(g)
}

/// Instance whose minimum is `-max G` over the plans that meet the first
/// leverage constraint and stay in `D`.
pub fn capacity_instance(p: &LiquidationParams) -> Result<QcqpInstance> {
    let base = build_qcqp_unchecked(p)?;
    let m = p.m;
    let n = 2 * m;
    let mut quad = SymMatrix::zeros(n);
    let mut lin = vec![0.0; n];
    for i in 0..m {
        let (lam, gam) = (p.lambda[i], p.gamma[i]);
        let t = p.rho2 * (lam - 0.5 * gam) + lam + 0.5 * gam;
        quad.set(i, i, t);
        quad.set(m + i, m + i, t);
        quad.set(i, m + i, 0.5 * (1.0 - p.rho2) * gam);
        let c = -(p.rho2 * gam * p.x0[i] - p.p0[i]);
        lin[i] = c;
        lin[m + i] = c;
    }
    QcqpInstance::new(
        QuadForm::new(quad, lin, 0.0)?,
        vec![base.constraints[0].clone()],
        base.lower,
        base.upper,
        base.linear_ineqs,
    )
}

/// Per-asset check of the sufficient conditions under which the half-sale
/// plan maximizes `G`.
pub fn capacity_conditions(p: &LiquidationParams) -> Vec<bool> {
    (0..p.m)
        .map(|i| {
            let (lam, gam, x, pr) = (p.lambda[i], p.gamma[i], p.x0[i], p.p0[i]);
            let k = p.k_coefficient(i);
            if k > 0.0 {
                pr > (p.rho2 + 1.0) * lam * x + gam * x
            } else if k == 0.0 {
                pr > p.rho2 * gam * x
            } else {
                pr > 0.5 * (p.rho2 + 1.0) * (lam + gam) * x
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockCapacity {
    pub delta_max: f64,
    pub closed_form_valid: bool,
    /// Maximum of `G` used in the formula.
    pub g_star: f64,
    /// Plan attaining `g_star`.
    pub argmax: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ShockOptions {
    /// Grid spacing of the fallback search, relative to each `x0_i`.
    pub grid_resolution: f64,
    /// Largest variable count searched by grid; bigger instances use
    /// branch-and-bound on the same problem.
    pub grid_max_dim: usize,
    pub global_eps: f64,
}

impl Default for ShockOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 1e-3,
            grid_max_dim: 2,
            global_eps: 1e-7,
        }
    }
}

/// Largest withdrawal the second leverage constraint can absorb,
/// `(rho2 e0 - l0 + max G) / (rho2 + 1)`.
pub fn shock_capacity(p: &LiquidationParams) -> Result<ShockCapacity> {
    shock_capacity_with(p, &ShockOptions::default())
}

pub fn shock_capacity_with(p: &LiquidationParams, opts: &ShockOptions) -> Result<ShockCapacity> {
    p.validate()?;
    let (at_zero, at_half) = second_assumption_margins(p)?;
    if at_zero >= 0.0 {
        return Err(Error::Precondition(format!(
            "no-trade plan already meets the first leverage cap: rho1 e1 - l1 = {at_zero:.6e} at y1 = 0 (must be < 0)"
        )));
    }
    if at_half <= 0.0 {
        return Err(Error::Precondition(format!(
            "half sale does not meet the first leverage cap: rho1 e1 - l1 = {at_half:.6e} at y1 = -x0/2 (must be > 0)"
        )));
    }
    let base = p.rho2 * p.e0 - p.l0;
    let closed = capacity_conditions(p).iter().all(|&b| b);
    let (g_star, argmax) = if closed {
        let y = p.half_sale_point();
        (capacity_function(p, &y)?, y)
    } else {
        maximize_capacity(p, opts)?
    };
    Ok(ShockCapacity {
        delta_max: (base + g_star) / (p.rho2 + 1.0),
        closed_form_valid: closed,
        g_star,
        argmax,
    })
}

/// Global maximization of `G` over the first-period-feasible plans.
pub fn maximize_capacity(p: &LiquidationParams, opts: &ShockOptions) -> Result<(f64, Vec<f64>)> {
    let inst = capacity_instance(p)?;
    if inst.dim() <= opts.grid_max_dim {
        let res = p.x0.iter().fold(f64::INFINITY, |m, &v| m.min(v)) * opts.grid_resolution;
        let o = crate::oracle::brute_force_oracle(&inst, res)?;
        let (y, v) = match (o.strict_y, o.strict_value) {
            (Some(y), Some(v)) => (y, v),
            _ => (o.y, o.value),
        };
        return Ok((-v, y));
    }
    let dc = crate::sco::DcInstance::new(inst)?;
    let opts = crate::scobb::ScobbOptions {
        eps: opts.global_eps,
        initial_point: Some(p.half_sale_point()),
        ..Default::default()
    };
    let rep = crate::scobb::run_scobb(&dc, None, &opts, None)?;
    match rep.incumbent {
        Some(y) => Ok((-rep.upper, y)),
        None => Err(Error::Solver(format!(
            "capacity maximization found no feasible plan: {}",
            rep.status
        ))),
    }
}

/// `rho1 e1 - l1` at `y1 = 0` and at `y1 = -x0/2`.
pub fn second_assumption_margins(p: &LiquidationParams) -> Result<(f64, f64)> {
    let zero = first_period_state(p, &vec![0.0; p.m])?;
    let half: Vec<f64> = p.x0.iter().map(|v| -0.5 * v).collect();
    let half = first_period_state(p, &half)?;
    Ok((p.rho1 * zero.e - zero.l, p.rho1 * half.e - half.l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityReport {
    /// `|rho2 e2 - l2|` with the shock realized.
    pub residual: f64,
    pub leverage: Option<f64>,
    pub active: bool,
    pub e2: f64,
    pub l2: f64,
}

/// Whether the second leverage constraint binds at `y`.
pub fn check_optimality_activity(
    p: &LiquidationParams,
    y: &[f64],
    tol: f64,
) -> Result<ActivityReport> {
    let s = second_period_state(p, y, p.delta)?;
    let residual = (p.rho2 * s.e - s.l).abs();
    Ok(ActivityReport {
        residual,
        leverage: s.leverage,
        active: residual <= tol * (1.0 + s.l.abs()),
        e2: s.e,
        l2: s.l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub holds: bool,
    /// The quantity whose sign decides the check.
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `rho1 e0 - l0 < 0`.
    pub initial_leverage: AssumptionCheck,
    /// Half sale restores the first leverage cap while no trade does not.
    pub half_sale: AssumptionCheck,
    /// A strictly feasible plan exists.
    pub slater: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.initial_leverage.holds && self.half_sale.holds && self.slater.holds
    }
}

pub fn check_assumptions(p: &LiquidationParams) -> AssumptionReport {
    let a1 = p.rho1 * p.e0 - p.l0;
    let initial_leverage = AssumptionCheck {
        holds: a1 < 0.0,
        value: a1,
        detail: format!("rho1*e0 - l0 = {a1:.6e}"),
    };
    let half_sale = match second_assumption_margins(p) {
        Ok((z, h)) => AssumptionCheck {
            holds: z < 0.0 && h > 0.0,
            value: if z >= 0.0 { z } else { h },
            detail: format!("rho1*e1 - l1 = {z:.6e} at y1 = 0 and {h:.6e} at y1 = -x0/2"),
        },
        Err(e) => AssumptionCheck {
            holds: false,
            value: f64::NAN,
            detail: e.to_string(),
        },
    };
    let slater = match slater_point(p) {
        Ok(Some((_, margin))) => AssumptionCheck {
            holds: true,
            value: margin,
            detail: format!("strictly feasible plan with margin {margin:.6e}"),
        },
        Ok(None) => AssumptionCheck {
            holds: false,
            value: f64::NAN,
            detail: "no strictly feasible plan found by interior search".into(),
        },
        Err(e) => AssumptionCheck {
            holds: false,
            value: f64::NAN,
            detail: e.to_string(),
        },
    };
    AssumptionReport {
        initial_leverage,
        half_sale,
        slater,
    }
}

/// Searches segments from the box midpoint and the half-sale plan toward the
/// centroid of `D` for a point where every constraint is strictly negative.
/// Returns the point and its smallest slack.
pub fn slater_point(p: &LiquidationParams) -> Result<Option<(Vec<f64>, f64)>> {
    let inst = build_qcqp_unchecked(p)?;
    let n = inst.dim();
    let centroid: Vec<f64> = p.x0.iter().chain(&p.x0).map(|v| -v / 3.0).collect();
    let starts = [inst.box_midpoint(), p.half_sale_point()];
    let fractions = [0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5, 1.0];
    for s in &starts {
        for &tau in &fractions {
            let y: Vec<f64> = (0..n).map(|i| (1.0 - tau) * s[i] + tau * centroid[i]).collect();
            let r = crate::qcqp::residuals(&inst, &y)?;
            let worst = r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            if worst < 0.0 {
                return Ok(Some((y, -worst)));
            }
        }
    }
    Ok(None)
}

/// Whether `y` is feasible for the instance built from `p`.
pub fn is_plan_feasible(p: &LiquidationParams, y: &[f64], tol: f64) -> Result<bool> {
    let inst = build_qcqp_unchecked(p)?;
    Ok(is_feasible(&inst, y, tol))
}

/// `e0 + l0 - p0' x0`, the balance left after selling everything at the
/// pre-trade price.
pub fn full_liquidation_balance(p: &LiquidationParams) -> f64 {
    p.e0 + p.l0 - dot(&p.p0, &p.x0)
}
