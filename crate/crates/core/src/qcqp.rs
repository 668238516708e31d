//! Problem representation and the evaluation primitives every algorithm shares.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SymMatrix};

/// `y' Q y + q' y + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadForm {
    #[serde(rename = "Q")]
    pub quad: SymMatrix,
    #[serde(rename = "q")]
    pub lin: Vec<f64>,
    #[serde(rename = "c")]
    pub constant: f64,
}

impl QuadForm {
    pub fn new(quad: SymMatrix, lin: Vec<f64>, constant: f64) -> Result<Self> {
        check_dim("quadratic form linear term", quad.dim(), lin.len())?;
        Ok(Self {
            quad,
            lin,
            constant,
        })
    }

    pub fn constant_form(n: usize, c: f64) -> Self {
        Self {
            quad: SymMatrix::zeros(n),
            lin: vec![0.0; n],
            constant: c,
        }
    }

    pub fn linear(lin: Vec<f64>, constant: f64) -> Self {
        Self {
            quad: SymMatrix::zeros(lin.len()),
            lin,
            constant,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    /// Unchecked evaluation; callers guarantee `y.len() == dim()`.
    #[inline]
    pub fn value(&self, y: &[f64]) -> f64 {
        self.quad.quad(y) + dot(&self.lin, y) + self.constant
    }

    /// `2 Q y + q`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| 2.0 * dot(self.quad.row(i), y) + self.lin[i])
            .collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            quad: self.quad.scaled(a),
            lin: self.lin.iter().map(|v| a * v).collect(),
            constant: a * self.constant,
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &QuadForm) -> Self {
        Self {
            quad: self.quad.add_scaled(a, &other.quad),
            lin: self
                .lin
                .iter()
                .zip(&other.lin)
                .map(|(x, y)| x + a * y)
                .collect(),
            constant: self.constant + a * other.constant,
        }
    }

    /// Extends to `n` variables; the new ones do not appear in the form.
    pub fn padded(&self, n: usize) -> Self {
        let mut lin = self.lin.clone();
        lin.resize(n, 0.0);
        Self {
            quad: self.quad.padded(n),
            lin,
            constant: self.constant,
        }
    }
}

/// Checked evaluation of `y' Q y + q' y + c`.
pub fn eval_quadform(qf: &QuadForm, y: &[f64]) -> Result<f64> {
    check_dim("eval_quadform", qf.dim(), y.len())?;
    Ok(qf.value(y))
}

/// `a' y <= b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIneq {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearIneq {
    #[inline]
    pub fn residual(&self, y: &[f64]) -> f64 {
        dot(&self.a, y) - self.b
    }
}

/// `min f(y)` subject to quadratic constraints `g_j(y) <= 0`, linear
/// inequalities and a finite box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpInstance {
    pub objective: QuadForm,
    #[serde(default)]
    pub constraints: Vec<QuadForm>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub linear_ineqs: Vec<LinearIneq>,
}

impl QcqpInstance {
    pub fn new(
        objective: QuadForm,
        constraints: Vec<QuadForm>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        linear_ineqs: Vec<LinearIneq>,
    ) -> Result<Self> {
        let inst = Self {
            objective,
            constraints,
            lower,
            upper,
            linear_ineqs,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("instance has no variables".into()));
        }
        check_dim("objective matrix", n, self.objective.quad.dim())?;
        for c in &self.constraints {
            check_dim("constraint linear term", n, c.lin.len())?;
            check_dim("constraint matrix", n, c.quad.dim())?;
        }
        check_dim("lower bounds", n, self.lower.len())?;
        check_dim("upper bounds", n, self.upper.len())?;
        for li in &self.linear_ineqs {
            check_dim("linear inequality", n, li.a.len())?;
        }
        for i in 0..n {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "box bounds must be finite (coordinate {i})"
                )));
            }
            if l > u {
                return Err(Error::InvalidArgument(format!(
                    "lower bound {l} exceeds upper bound {u} at coordinate {i}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Same objective and constraints over a different box.
    pub fn with_box(&self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            ..self.clone()
        }
    }

    pub fn box_midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

/// Residual vector at `y`, in this order:
///
/// 1. each quadratic constraint value `g_j(y)`;
/// 2. each linear slack `a' y - b`;
/// 3. each lower-box residual `lower_i - y_i`;
/// 4. each upper-box residual `y_i - upper_i`.
///
/// Every entry is `<= 0` exactly when that constraint holds.
pub fn residuals(inst: &QcqpInstance, y: &[f64]) -> Result<Vec<f64>> {
    check_dim("residuals", inst.dim(), y.len())?;
    let n = inst.dim();
    let mut out =
        Vec::with_capacity(inst.constraints.len() + inst.linear_ineqs.len() + 2 * n);
    out.extend(inst.constraints.iter().map(|c| c.value(y)));
    out.extend(inst.linear_ineqs.iter().map(|li| li.residual(y)));
    out.extend((0..n).map(|i| inst.lower[i] - y[i]));
    out.extend((0..n).map(|i| y[i] - inst.upper[i]));
    Ok(out)
}

/// Largest residual, or `-inf` when there is nothing to violate.
pub fn max_violation(inst: &QcqpInstance, y: &[f64]) -> Result<f64> {
    Ok(residuals(inst, y)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_feasible(inst: &QcqpInstance, y: &[f64], tol: f64) -> bool {
    match residuals(inst, y) {
        Ok(r) => r.iter().all(|&v| v <= tol),
        Err(_) => false,
    }
}

/// Feasibility with a separate tolerance for each quadratic constraint;
/// linear and box constraints use `linear_tol`.
pub fn is_feasible_with(
    inst: &QcqpInstance,
    y: &[f64],
    quad_tols: &[f64],
    linear_tol: f64,
) -> bool {
    if y.len() != inst.dim() {
        return false;
    }
    let quad_ok = inst
        .constraints
        .iter()
        .zip(quad_tols)
        .all(|(c, &tol)| c.value(y) <= tol);
    quad_ok
        && inst
            .linear_ineqs
            .iter()
            .all(|li| li.residual(y) <= linear_tol)
        && (0..inst.dim())
            .all(|i| inst.lower[i] - y[i] <= linear_tol && y[i] - inst.upper[i] <= linear_tol)
}
