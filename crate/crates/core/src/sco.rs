//! Sequential convex optimization on the difference-of-convex split.
//!
//! Every quadratic form is written `y' Q+ y - y' Q- y + q' y + c` with both
//! parts positive semidefinite. Replacing the concave term by its tangent at
//! `u`, `-y' Q- y <= -2 u' Q- y + u' Q- u`, gives a convex majorant that is
//! tight at `u`. Minimizing the majorant over its (inner-approximating)
//! feasible set and re-expanding at the minimizer produces a feasible,
//! monotonically improving sequence.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist2, SymMatrix};
use crate::qcqp::{is_feasible, max_violation, QcqpInstance, QuadForm};
use crate::spectral::{spectral_split, SpectralSplit};
use crate::subsolvers::{solve_convex_qcqp, BarrierOptions, SolveStatus, StatusKind};

/// An instance together with the sign split of each quadratic matrix.
#[derive(Debug, Clone)]
pub struct DcInstance {
    pub base: QcqpInstance,
    /// `splits[0]` belongs to the objective, `splits[j + 1]` to constraint `j`.
    pub splits: Vec<SpectralSplit>,
}

impl DcInstance {
    pub fn new(base: QcqpInstance) -> Result<Self> {
        base.validate()?;
        let mut splits = Vec::with_capacity(base.constraints.len() + 1);
        splits.push(spectral_split(&base.objective.quad)?);
        for c in &base.constraints {
            splits.push(spectral_split(&c.quad)?);
        }
        Ok(Self { base, splits })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn objective_split(&self) -> &SpectralSplit {
        &self.splits[0]
    }

    pub fn constraint_split(&self, j: usize) -> &SpectralSplit {
        &self.splits[j + 1]
    }

    /// True when no quadratic form has a concave part.
    pub fn is_convex(&self) -> bool {
        self.splits.iter().all(|s| s.is_convex())
    }

    /// `(form, split)` pairs, objective first.
    pub(crate) fn forms(&self) -> impl Iterator<Item = (&QuadForm, &SpectralSplit)> {
        std::iter::once(&self.base.objective)
            .chain(&self.base.constraints)
            .zip(&self.splits)
    }
}

/// Convex majorant of `qf` that is tight at `u`.
fn linearize_at(qf: &QuadForm, split: &SpectralSplit, u: &[f64]) -> QuadForm {
    if split.minus.is_zero() {
        return qf.clone();
    }
    let mu = split.minus.mul_vec(u);
    let lin = qf
        .lin
        .iter()
        .zip(&mu)
        .map(|(q, m)| q - 2.0 * m)
        .collect();
    let constant = qf.constant + crate::linalg::dot(u, &mu);
    QuadForm {
        quad: split.plus.clone(),
        lin,
        constant,
    }
}

/// Replaces every concave part by its tangent at `u`. The result is convex,
/// majorizes each form, and agrees with the original at `y = u`.
pub fn build_upper_relaxation(dc: &DcInstance, u: &[f64]) -> Result<QcqpInstance> {
    check_dim("build_upper_relaxation", dc.dim(), u.len())?;
    let mut forms = dc.forms().map(|(qf, split)| linearize_at(qf, split, u));
    let objective = forms.next().expect("objective form");
    Ok(QcqpInstance {
        objective,
        constraints: forms.collect(),
        lower: dc.base.lower.clone(),
        upper: dc.base.upper.clone(),
        linear_ineqs: dc.base.linear_ineqs.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct ScoOptions {
    /// Stop once consecutive expansion points are closer than this.
    pub eps: f64,
    pub max_iter: usize,
    /// Allowed constraint violation of the starting point.
    pub start_tol: f64,
    pub barrier: BarrierOptions,
}

impl Default for ScoOptions {
    fn default() -> Self {
        let eps = 1e-6;
        Self {
            eps,
            max_iter: 1000,
            start_tol: 1e-9,
            barrier: BarrierOptions {
                tol: (eps / 10.0).min(1e-8),
                gap_tol: 1e-10,
                ..Default::default()
            },
        }
    }
}

impl ScoOptions {
    /// Defaults with a different stopping threshold; the inner tolerance
    /// follows as `min(1e-8, eps / 10)`.
    pub fn with_eps(eps: f64) -> Self {
        let mut o = Self::default();
        o.eps = eps;
        o.barrier.tol = (eps / 10.0).min(1e-8);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoIterate {
    pub y: Vec<f64>,
    pub value: f64,
    /// Distance from the previous expansion point.
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoTrace {
    /// `iterates[0]` is the starting point with step 0.
    pub iterates: Vec<ScoIterate>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct ScoResult {
    pub y: Vec<f64>,
    pub value: f64,
    pub trace: ScoTrace,
}

impl ScoResult {
    /// Number of convex subproblems solved.
    pub fn iterations(&self) -> usize {
        self.trace.iterates.len().saturating_sub(1)
    }
}

/// Runs sequential convex optimization from the feasible point `y0`.
pub fn run_sco(dc: &DcInstance, y0: &[f64], opts: &ScoOptions) -> Result<ScoResult> {
    check_dim("run_sco start", dc.dim(), y0.len())?;
    if !is_feasible(&dc.base, y0, opts.start_tol) {
        let v = max_violation(&dc.base, y0)?;
        return Err(Error::Precondition(format!(
            "starting point is infeasible (max residual {v:.3e} exceeds {:.3e})",
            opts.start_tol
        )));
    }
    let mut u = y0.to_vec();
    let mut value = dc.base.objective.value(&u);
    let mut iterates = vec![ScoIterate {
        y: u.clone(),
        value,
        step: 0.0,
    }];

    let status = loop {
        if iterates.len() > opts.max_iter {
            break SolveStatus::new(
                StatusKind::IterLimit,
                format!("{} iterations without convergence", opts.max_iter),
            );
        }
        let relax = build_upper_relaxation(dc, &u)?;
        let sol = solve_convex_qcqp(&relax, &opts.barrier);
        if !sol.status.is_optimal() {
            break SolveStatus::new(
                sol.status.kind,
                format!("convex subproblem {}: {}", iterates.len(), sol.status),
            );
        }
        let next_value = dc.base.objective.value(&sol.y);
        let step = dist2(&sol.y, &u);
        u = sol.y;
        value = next_value;
        iterates.push(ScoIterate {
            y: u.clone(),
            value,
            step,
        });
        if step < opts.eps {
            break SolveStatus::optimal();
        }
    };

    Ok(ScoResult {
        y: u,
        value,
        trace: ScoTrace { iterates, status },
    })
}

/// Searches for a strictly feasible point by running SCO on
/// `min s` subject to `g_j(y) <= s` and `a'y - b <= s` over the box.
/// Returns `None` when the local search stalls with `s >= 0`.
pub fn find_feasible_point(dc: &DcInstance, opts: &ScoOptions) -> Result<Option<Vec<f64>>> {
    let base = &dc.base;
    let n = base.dim();
    let mid = base.box_midpoint();
    if base.constraints.iter().all(|c| c.value(&mid) < 0.0)
        && base.linear_ineqs.iter().all(|li| li.residual(&mid) < 0.0)
    {
        return Ok(Some(mid));
    }
    let start_res = base
        .constraints
        .iter()
        .map(|c| c.value(&mid))
        .chain(base.linear_ineqs.iter().map(|li| li.residual(&mid)))
        .fold(f64::NEG_INFINITY, f64::max);
    let s_hi = start_res.max(0.0) + 1.0;

    let mut lin_s = vec![0.0; n + 1];
    lin_s[n] = 1.0;
    let mut constraints: Vec<QuadForm> = base
        .constraints
        .iter()
        .map(|c| {
            let mut f = c.padded(n + 1);
            f.lin[n] = -1.0;
            f
        })
        .collect();
    for li in &base.linear_ineqs {
        let mut lin = li.a.clone();
        lin.push(-1.0);
        constraints.push(QuadForm {
            quad: SymMatrix::zeros(n + 1),
            lin,
            constant: -li.b,
        });
    }
    let mut lower = base.lower.clone();
    let mut upper = base.upper.clone();
    lower.push(-1.0);
    upper.push(s_hi);
    let aux = QcqpInstance::new(QuadForm::linear(lin_s, 0.0), constraints, lower, upper, vec![])?;
    let aux = DcInstance::new(aux)?;
    let mut y0 = mid;
    y0.push(start_res.max(0.0) + 0.5);
    let res = run_sco(&aux, &y0, opts)?;
    let y: Vec<f64> = res.y[..n].to_vec();
    let strictly = base.constraints.iter().all(|c| c.value(&y) < 0.0)
        && base.linear_ineqs.iter().all(|li| li.residual(&y) <= 0.0)
        && (0..n).all(|i| y[i] >= base.lower[i] && y[i] <= base.upper[i]);
    Ok(strictly.then_some(y))
}
