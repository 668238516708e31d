//! Convex underestimating relaxations of a DC instance over a box.
//!
//! Over the box `[l, u]` with midpoint `c` a convex quadratic `y' A y` is
//! majorized by its tangent at `c` raised by the largest value of
//! `(y - c)' A (y - c)` on the box, which is attained at a vertex. When `A`
//! has no negative off-diagonal entries this equals the chord form
//! `(u + l)' A y - u' A l`; otherwise the chord form can cut below `y' A y`
//! and the vertex maximum is taken over sign patterns. The excess over
//! `y' A y` never exceeds `|A|_2 |u - l|^2 / 4`. Applying this to every
//! concave part `-y' Q- y` yields the default relaxation. The secant
//! alternative writes each form as the convex `y' (Q + lambda I) y` minus
//! `lambda sum y_i^2` with `lambda = lambda_max(Q-)` and replaces each square
//! in the subtracted sum by its chord over `[l_i, u_i]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SymMatrix};
use crate::qcqp::{LinearIneq, QcqpInstance, QuadForm};
use crate::sco::DcInstance;
use crate::spectral::{min_eigenvalue, SpectralSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelaxationKind {
    McCormick,
    Secant,
}

/// A convex relaxation restricted to a box. For the secant kind the last
/// `aux_count` variables are auxiliaries standing for the squares `y_i^2`.
#[derive(Debug, Clone)]
pub struct BoxRelaxation {
    pub instance: QcqpInstance,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: RelaxationKind,
    pub aux_count: usize,
}

fn check_box(n: usize, yl: &[f64], yu: &[f64]) -> Result<()> {
    check_dim("box lower", n, yl.len())?;
    check_dim("box upper", n, yu.len())?;
    if let Some(i) = (0..n).find(|&i| !(yl[i] <= yu[i])) {
        return Err(Error::InvalidArgument(format!(
            "empty box at coordinate {i}: [{}, {}]",
            yl[i], yu[i]
        )));
    }
    Ok(())
}

/// Affine majorant `linear' x + constant >= x' A x` on the box, with
/// `linear = A (yu + yl)` and `constant = -c' A c + max_box (x - c)' A (x - c)`
/// for the midpoint `c`. The constant reduces to `-yu' A yl` when no
/// off-diagonal entry of `A` is negative. Requires `A` PSD.
pub fn quad_overestimator(a: &SymMatrix, yl: &[f64], yu: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_box(a.dim(), yl, yu)?;
    if !a.is_zero() {
        let ev = min_eigenvalue(a)?;
        if ev < -1e-8 * a.max_abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "overestimator needs a PSD matrix (min eigenvalue {ev:.3e})"
            )));
        }
    }
    Ok(overestimator_unchecked(a, yl, yu))
}

fn overestimator_unchecked(a: &SymMatrix, yl: &[f64], yu: &[f64]) -> (Vec<f64>, f64) {
    let s: Vec<f64> = yl.iter().zip(yu).map(|(l, u)| l + u).collect();
    let w: Vec<f64> = yl.iter().zip(yu).map(|(l, u)| u - l).collect();
    let lin = a.mul_vec(&s);
    let constant = -0.25 * dot(&s, &lin) + 0.25 * vertex_spread(a, &w);
    (lin, constant)
}

/// Largest component size searched exhaustively by [`vertex_spread`].
const MAX_ENUMERATED_BLOCK: usize = 12;

/// `max_s (s o w)' A (s o w)` over sign vectors `s`, i.e. four times the
/// largest value of `(x - c)' A (x - c)` on the box. Coordinates split into
/// components linked by nonzero off-diagonal entries; small components are
/// enumerated, larger ones bounded by `min(w'|A|w, lambda_max |w|^2)`.
fn vertex_spread(a: &SymMatrix, w: &[f64]) -> f64 {
    let n = a.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a.get(i, j) != 0.0 && w[i] > 0.0 && w[j] > 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if w[i] > 0.0 {
            let r = find(&mut parent, i);
            groups[r].push(i);
        }
    }
    let mut total = 0.0;
    let mut sw = vec![0.0; n];
    for g in groups.iter().filter(|g| !g.is_empty()) {
        let k = g.len();
        let abs_bound: f64 = g
            .iter()
            .map(|&i| g.iter().map(|&j| a.get(i, j).abs() * w[i] * w[j]).sum::<f64>())
            .sum();
        if k <= MAX_ENUMERATED_BLOCK {
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1u32 << (k - 1)) {
                for (t, &i) in g.iter().enumerate() {
                    let neg = t > 0 && (mask >> (t - 1)) & 1 == 1;
                    sw[i] = if neg { -w[i] } else { w[i] };
                }
                let v: f64 = g
                    .iter()
                    .map(|&i| sw[i] * g.iter().map(|&j| a.get(i, j) * sw[j]).sum::<f64>())
                    .sum();
                best = best.max(v);
            }
            total += best;
        } else {
            let sub = a.submatrix(g);
            let w2: f64 = g.iter().map(|&i| w[i] * w[i]).sum();
            let lam = crate::spectral::spectral_norm(&sub).unwrap_or(f64::INFINITY);
            total += abs_bound.min(lam * w2);
        }
    }
    total
}

/// Affine bound `cx x + cy y + c0` on `w = x y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub cx: f64,
    pub cy: f64,
    pub c0: f64,
}

impl AffineBound {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.cx * x + self.cy * y + self.c0
    }
}

/// The four McCormick inequalities for `w = x y` on a rectangle:
/// `w >= under[k](x, y)` and `w <= over[k](x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearEnvelope {
    pub under: [AffineBound; 2],
    pub over: [AffineBound; 2],
}

impl BilinearEnvelope {
    pub fn lower(&self, x: f64, y: f64) -> f64 {
        self.under[0].eval(x, y).max(self.under[1].eval(x, y))
    }

    pub fn upper(&self, x: f64, y: f64) -> f64 {
        self.over[0].eval(x, y).min(self.over[1].eval(x, y))
    }
}

pub fn mccormick_bilinear(xl: f64, xu: f64, yl: f64, yu: f64) -> BilinearEnvelope {
    let ab = |cx: f64, cy: f64, c0: f64| AffineBound { cx, cy, c0 };
    BilinearEnvelope {
        // (x - xl)(y - yl) >= 0 and (xu - x)(yu - y) >= 0
        under: [ab(yl, xl, -xl * yl), ab(yu, xu, -xu * yu)],
        // (xu - x)(y - yl) >= 0 and (x - xl)(yu - y) >= 0
        over: [ab(yl, xu, -xu * yl), ab(yu, xl, -xl * yu)],
    }
}

fn mccormick_form(qf: &QuadForm, split: &SpectralSplit, yl: &[f64], yu: &[f64]) -> QuadForm {
    if split.minus.is_zero() {
        return qf.clone();
    }
    let (lin, c) = overestimator_unchecked(&split.minus, yl, yu);
    QuadForm {
        quad: split.plus.clone(),
        lin: qf.lin.iter().zip(&lin).map(|(q, l)| q - l).collect(),
        constant: qf.constant - c,
    }
}

/// Replaces each concave part by its affine minorant over the box; keeps the
/// instance's linear inequalities.
pub fn build_lower_relaxation_mccormick(
    dc: &DcInstance,
    yl: &[f64],
    yu: &[f64],
) -> Result<BoxRelaxation> {
    check_box(dc.dim(), yl, yu)?;
    let mut forms = dc.forms().map(|(qf, split)| mccormick_form(qf, split, yl, yu));
    let objective = forms.next().expect("objective form");
    let instance = QcqpInstance {
        objective,
        constraints: forms.collect(),
        lower: yl.to_vec(),
        upper: yu.to_vec(),
        linear_ineqs: dc.base.linear_ineqs.clone(),
    };
    Ok(BoxRelaxation {
        instance,
        lower: yl.to_vec(),
        upper: yu.to_vec(),
        kind: RelaxationKind::McCormick,
        aux_count: 0,
    })
}

/// Relaxation in `(y, t)` with `t_i` standing for `y_i^2`:
/// `y' (Q + lambda I) y - lambda sum t_i + q' y + c` for every form, with
/// `lambda = lambda_max(Q-)`, plus
/// `y_i^2 <= t_i` and the chord `t_i <= (l_i + u_i) y_i - l_i u_i`.
pub fn build_lower_relaxation_secant(
    dc: &DcInstance,
    yl: &[f64],
    yu: &[f64],
) -> Result<BoxRelaxation> {
    let n = dc.dim();
    check_box(n, yl, yu)?;
    let nn = 2 * n;
    let lift = |qf: &QuadForm, split: &SpectralSplit| -> QuadForm {
        let lam = split.minus_norm();
        if lam == 0.0 {
            return qf.padded(nn);
        }
        let mut lin = qf.lin.clone();
        lin.resize(nn, -lam);
        // Q + lam I = Q+ + (lam I - Q-) is positive semidefinite
        let shifted = split
            .plus
            .add_scaled(1.0, &SymMatrix::identity(n).scaled(lam))
            .add_scaled(-1.0, &split.minus);
        QuadForm {
            quad: shifted.padded(nn),
            lin,
            constant: qf.constant,
        }
    };
    let mut forms = dc.forms().map(|(qf, split)| lift(qf, split));
    let objective = forms.next().expect("objective form");
    let mut constraints: Vec<QuadForm> = forms.collect();
    let mut linear_ineqs: Vec<LinearIneq> = dc
        .base
        .linear_ineqs
        .iter()
        .map(|li| {
            let mut a = li.a.clone();
            a.resize(nn, 0.0);
            LinearIneq { a, b: li.b }
        })
        .collect();
    for i in 0..n {
        let mut quad = SymMatrix::zeros(nn);
        quad.set(i, i, 1.0);
        let mut lin = vec![0.0; nn];
        lin[n + i] = -1.0;
        constraints.push(QuadForm {
            quad,
            lin,
            constant: 0.0,
        });
        // t_i - (l + u) y_i <= -l u
        let mut a = vec![0.0; nn];
        a[n + i] = 1.0;
        a[i] = -(yl[i] + yu[i]);
        linear_ineqs.push(LinearIneq { a, b: -yl[i] * yu[i] });
    }
    let mut lower = yl.to_vec();
    let mut upper = yu.to_vec();
    for i in 0..n {
        lower.push(0.0);
        upper.push((yl[i] * yl[i]).max(yu[i] * yu[i]));
    }
    let instance = QcqpInstance {
        objective,
        constraints,
        lower,
        upper,
        linear_ineqs,
    };
    Ok(BoxRelaxation {
        instance,
        lower: yl.to_vec(),
        upper: yu.to_vec(),
        kind: RelaxationKind::Secant,
        aux_count: n,
    })
}

impl BoxRelaxation {
    /// Number of constraints that correspond to the original quadratic
    /// constraints (the secant kind appends auxiliary ones).
    pub fn original_constraints(&self) -> usize {
        self.instance.constraints.len() - self.aux_count
    }
}

/// Worst-case relaxation error on the box:
/// `(1/4) |Q-|_2 |u - l|^2` for the objective and each constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

pub fn gap_bound(dc: &DcInstance, yl: &[f64], yu: &[f64]) -> Result<GapBound> {
    check_box(dc.dim(), yl, yu)?;
    let w2: f64 = yl.iter().zip(yu).map(|(l, u)| (u - l) * (u - l)).sum();
    let g = |s: &SpectralSplit| 0.25 * s.minus_norm() * w2;
    Ok(GapBound {
        objective: g(dc.objective_split()),
        constraints: dc.splits[1..].iter().map(g).collect(),
    })
}

/// Value of the affine majorant from [`quad_overestimator`] at `x`.
pub fn overestimate(linear: &[f64], constant: f64, x: &[f64]) -> f64 {
    dot(linear, x) + constant
}
