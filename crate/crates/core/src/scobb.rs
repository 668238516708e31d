//! Best-first branch-and-bound with SCO upper bounds and convex
//! underestimating relaxations over boxes.
//!
//! Every node carries a sub-box, the optimal value of its relaxation (a
//! lower bound for the true problem on that box) and the relaxation's
//! minimizer. The node with the smallest lower bound is split in half along
//! its longest edge. Relaxation minimizers that are feasible for the original
//! problem and improve the incumbent by at least `eps` restart SCO, and nodes
//! whose lower bound cannot beat the incumbent by `eps` are discarded. The
//! search ends when the best open lower bound is within `eps` of the
//! incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::cutplane::{run_cutplane, CutPlaneOptions};
use crate::error::{Error, Result};
use crate::liquidation::{build_qcqp, check_optimality_activity, ActivityReport, LiquidationParams};
use crate::lowerbound::{build_lower_relaxation_mccormick, build_lower_relaxation_secant, RelaxationKind};
use crate::qcqp::{is_feasible_with, QcqpInstance};
use crate::sco::{find_feasible_point, run_sco, DcInstance, ScoOptions};
use crate::subsolvers::{solve_convex_qcqp, BarrierOptions, ConvexSolution, SolveStatus, StatusKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbNode {
    pub lower_box: Vec<f64>,
    pub upper_box: Vec<f64>,
    /// Lower bound on the objective over the box.
    pub lower: f64,
    pub relax_argmin: Vec<f64>,
    pub depth: usize,
    pub id: usize,
}

/// Heap entry ordered so that `BinaryHeap` pops the smallest `(lower, id)`.
struct Open(BbNode);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .lower
            .total_cmp(&self.0.lower)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Splits the box at the midpoint of its longest edge (smallest index on
/// ties). Children inherit the parent's bound, argmin and id; the caller
/// assigns fresh ids and bounds.
pub fn branch(node: &BbNode) -> Result<(BbNode, BbNode)> {
    let n = node.lower_box.len();
    let mut best = 0;
    let mut width = f64::NEG_INFINITY;
    for i in 0..n {
        let w = node.upper_box[i] - node.lower_box[i];
        if w > width {
            width = w;
            best = i;
        }
    }
    if !(width > 0.0) {
        return Err(Error::InvalidArgument("cannot branch a box of zero width".into()));
    }
    let beta = 0.5 * (node.lower_box[best] + node.upper_box[best]);
    let mut left = node.clone();
    let mut right = node.clone();
    left.upper_box[best] = beta;
    right.lower_box[best] = beta;
    left.depth += 1;
    right.depth += 1;
    Ok((left, right))
}

#[derive(Debug, Clone)]
pub struct ScobbOptions {
    pub eps: f64,
    pub max_nodes: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Worker count for solving the two children of a node; results do not
    /// depend on it.
    pub threads: usize,
    pub bounder: RelaxationKind,
    /// Restart SCO from every relaxation minimizer that is feasible and
    /// strictly better than the incumbent, instead of only from those that
    /// improve it by `eps`.
    pub restart_on_every_improving_node: bool,
    /// Starting point for instances without a liquidation model.
    pub initial_point: Option<Vec<f64>>,
    pub sco: ScoOptions,
    pub barrier: BarrierOptions,
    pub cutplane: CutPlaneOptions,
}

impl Default for ScobbOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_nodes: 200_000,
            time_limit: None,
            threads: 1,
            bounder: RelaxationKind::McCormick,
            restart_on_every_improving_node: false,
            initial_point: None,
            sco: ScoOptions::default(),
            barrier: BarrierOptions::default(),
            cutplane: CutPlaneOptions::default(),
        }
    }
}

/// Snapshot passed to the progress callback after every processed node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub nodes_processed: usize,
    pub upper: f64,
    pub lower: f64,
    pub open_nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub incumbent: Option<Vec<f64>>,
    pub upper: f64,
    /// Smallest lower bound over the nodes still open (or closed by the
    /// termination test) at exit.
    pub lower: f64,
    pub gap: f64,
    pub nodes_processed: usize,
    pub relaxations_solved: usize,
    pub sco_restarts: usize,
    pub status: SolveStatus,
    pub wall_time: f64,
    pub activity: Option<ActivityReport>,
    /// Node bound computed from the largest constraint concave part.
    /// Serialized as an integer, or as a decimal string beyond `u64::MAX`.
    #[serde(with = "wide_count")]
    pub worst_case_nodes: u128,
    /// Same bound using the largest concave part over all forms.
    #[serde(with = "wide_count")]
    pub worst_case_nodes_all: u128,
    /// Value of the first SCO solution (from the initial point).
    pub initial_upper: Option<f64>,
    pub cutplane_iterations: usize,
    pub initial_sco_iterations: usize,
}

mod wide_count {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        match u64::try_from(*v) {
            Ok(small) => s.serialize_u64(small),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v.into()),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

fn node_bound_product(norm: f64, lower: &[f64], upper: &[f64], eps: f64) -> u128 {
    let root = 2.0 * eps.sqrt();
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| {
            let f = (norm * (u - l) / root).ceil();
            if f.is_nan() || f <= 1.0 {
                1u128
            } else if f >= u128::MAX as f64 {
                u128::MAX
            } else {
                f as u128
            }
        })
        .fold(1u128, |acc, f| acc.saturating_mul(f))
}

/// `prod_i max(1, ceil(|C-|_2 (u_i - l_i) / (2 sqrt(eps))))` with `|C-|_2`
/// the largest spectral norm among the constraints' concave parts.
pub fn worst_case_nodes(dc: &DcInstance, lower: &[f64], upper: &[f64], eps: f64) -> u128 {
    let norm = dc.splits[1..]
        .iter()
        .map(|s| s.minus_norm())
        .fold(0.0, f64::max);
    node_bound_product(norm, lower, upper, eps)
}

/// As [`worst_case_nodes`] but also counting the objective's concave part.
pub fn worst_case_nodes_all(dc: &DcInstance, lower: &[f64], upper: &[f64], eps: f64) -> u128 {
    let norm = dc.splits.iter().map(|s| s.minus_norm()).fold(0.0, f64::max);
    node_bound_product(norm, lower, upper, eps)
}

fn solve_relaxation(
    dc: &DcInstance,
    lower: &[f64],
    upper: &[f64],
    kind: RelaxationKind,
    barrier: &BarrierOptions,
) -> Result<ConvexSolution> {
    let n = dc.dim();
    let relax = match kind {
        RelaxationKind::McCormick => build_lower_relaxation_mccormick(dc, lower, upper)?,
        RelaxationKind::Secant => build_lower_relaxation_secant(dc, lower, upper)?,
    };
    let mut sol = solve_convex_qcqp(&relax.instance, barrier);
    if !sol.status.is_optimal() {
        debug!("relaxation on {lower:?} x {upper:?}: {}", sol.status);
    }
    sol.y.truncate(n);
    Ok(sol)
}

/// Incumbent acceptance test: the first quadratic constraint must hold
/// exactly, the others and the linear part within `eps`.
fn passes_guards(inst: &QcqpInstance, y: &[f64], eps: f64) -> bool {
    let mut tols = vec![eps; inst.constraints.len()];
    if let Some(t) = tols.first_mut() {
        *t = 0.0;
    }
    is_feasible_with(inst, y, &tols, eps)
}

struct Incumbent {
    y: Option<Vec<f64>>,
    value: f64,
}

impl Incumbent {
    fn offer(&mut self, y: &[f64], value: f64) -> bool {
        if value < self.value {
            self.y = Some(y.to_vec());
            self.value = value;
            true
        } else {
            false
        }
    }
}

/// Runs SCO from `start` and offers both the start and the SCO result.
fn improve_from(
    dc: &DcInstance,
    start: &[f64],
    opts: &ScobbOptions,
    inc: &mut Incumbent,
) -> Result<usize> {
    let base = &dc.base;
    let mut improved = false;
    let mut sco_iters = 0;
    let sco_opts = ScoOptions {
        start_tol: opts.eps.max(opts.sco.start_tol),
        ..opts.sco.clone()
    };
    match run_sco(dc, start, &sco_opts) {
        Ok(res) => {
            sco_iters = res.iterations();
            // the best guarded iterate, scanning from the last one
            if let Some(it) = res
                .trace
                .iterates
                .iter()
                .rev()
                .find(|it| passes_guards(base, &it.y, opts.eps))
            {
                improved |= inc.offer(&it.y, it.value);
            }
            if !res.trace.status.is_optimal() {
                debug!("SCO stopped early: {}", res.trace.status);
            }
        }
        Err(e) => debug!("SCO not started: {e}"),
    }
    if passes_guards(base, start, opts.eps) {
        improved |= inc.offer(start, base.objective.value(start));
    }
    let _ = improved;
    Ok(sco_iters)
}

pub fn run_scobb(
    dc: &DcInstance,
    liq: Option<&LiquidationParams>,
    opts: &ScobbOptions,
    mut progress: Option<&mut dyn FnMut(&Progress)>,
) -> Result<SolveReport> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
    }
    let start_time = Instant::now();
    let base = &dc.base;
    let n = dc.dim();
    let eps = opts.eps;

    let mut inc = Incumbent {
        y: None,
        value: f64::INFINITY,
    };
    let mut cutplane_iterations = 0;

    // initial feasible point
    let init: Option<Vec<f64>> = if let Some(p) = liq {
        let cp = run_cutplane(p, &opts.cutplane)?;
        cutplane_iterations = cp.iterations;
        cp.feasible_point
    } else if let Some(y) = opts
        .initial_point
        .as_ref()
        .filter(|y| y.len() == n && passes_guards(base, y, eps))
    {
        Some(y.clone())
    } else {
        find_feasible_point(dc, &opts.sco).unwrap_or(None)
    };
    let mut initial_sco_iterations = 0;
    if let Some(y0) = &init {
        initial_sco_iterations = improve_from(dc, y0, opts, &mut inc)?;
    }
    let initial_upper = inc.y.as_ref().map(|_| inc.value);
    info!(
        "initial upper bound {:.10e} after {} SCO iterations",
        inc.value, initial_sco_iterations
    );

    let worst = worst_case_nodes(dc, &base.lower, &base.upper, eps);
    let worst_all = worst_case_nodes_all(dc, &base.lower, &base.upper, eps);

    let mut relaxations_solved = 1;
    let mut sco_restarts = 0;
    let root_sol = solve_relaxation(dc, &base.lower, &base.upper, opts.bounder, &opts.barrier)?;
    let finish = |inc: Incumbent,
                  lower: f64,
                  status: SolveStatus,
                  nodes: usize,
                  relaxations: usize,
                  restarts: usize|
     -> SolveReport {
        let activity = match (liq, &inc.y) {
            (Some(p), Some(y)) => check_optimality_activity(p, y, 1e-6).ok(),
            _ => None,
        };
        let gap = if inc.value.is_finite() && lower.is_finite() {
            (inc.value - lower).max(0.0)
        } else {
            f64::INFINITY
        };
        SolveReport {
            incumbent: inc.y,
            upper: inc.value,
            lower,
            gap,
            nodes_processed: nodes,
            relaxations_solved: relaxations,
            sco_restarts: restarts,
            status,
            wall_time: start_time.elapsed().as_secs_f64(),
            activity,
            worst_case_nodes: worst,
            worst_case_nodes_all: worst_all,
            initial_upper,
            cutplane_iterations,
            initial_sco_iterations,
        }
    };

    if root_sol.status.kind == StatusKind::Infeasible {
        let status = SolveStatus::new(
            StatusKind::Infeasible,
            format!("root relaxation infeasible: {}", root_sol.status),
        );
        return Ok(finish(inc, f64::INFINITY, status, 0, relaxations_solved, 0));
    }
    let root_lower = if root_sol.dual_bound.is_finite() {
        root_sol.dual_bound
    } else {
        f64::NEG_INFINITY
    };

    let mut next_id = 0usize;
    let mut heap = BinaryHeap::new();
    let root = BbNode {
        lower_box: base.lower.clone(),
        upper_box: base.upper.clone(),
        lower: root_lower,
        relax_argmin: root_sol.y.clone(),
        depth: 0,
        id: next_id,
    };
    next_id += 1;
    consider_candidate(dc, &root.relax_argmin, opts, &mut inc, &mut sco_restarts)?;
    heap.push(Open(root));

    let mut closed_lower = f64::INFINITY;
    let mut nodes_processed = 0usize;
    let mut status = SolveStatus::optimal();
    let mut exit_lower: Option<f64> = None;

    while let Some(Open(node)) = heap.pop() {
        if node.lower >= inc.value - eps {
            exit_lower = Some(node.lower);
            nodes_processed += 1;
            break;
        }
        let over_time = opts
            .time_limit
            .is_some_and(|t| start_time.elapsed().as_secs_f64() > t);
        if nodes_processed >= opts.max_nodes || over_time {
            let what = if over_time { "time limit" } else { "node limit" };
            status = SolveStatus::new(
                StatusKind::IterLimit,
                format!("{what} reached after {nodes_processed} nodes"),
            );
            heap.push(Open(node));
            break;
        }
        nodes_processed += 1;

        let (left, right) = match branch(&node) {
            Ok(pair) => pair,
            Err(_) => {
                closed_lower = closed_lower.min(node.lower);
                continue;
            }
        };
        let solve = |c: &BbNode| {
            solve_relaxation(dc, &c.lower_box, &c.upper_box, opts.bounder, &opts.barrier)
        };
        let (ls, rs) = if opts.threads > 1 {
            std::thread::scope(|s| {
                let h = s.spawn(|| solve(&right));
                let l = solve(&left);
                (l, h.join().expect("relaxation worker panicked"))
            })
        } else {
            (solve(&left), solve(&right))
        };
        let mut kept = Vec::with_capacity(2);
        for (mut child, sol) in [(left, ls?), (right, rs?)] {
            relaxations_solved += 1;
            child.id = next_id;
            next_id += 1;
            if sol.status.kind == StatusKind::Infeasible {
                continue;
            }
            if sol.dual_bound.is_finite() {
                child.lower = node.lower.max(sol.dual_bound);
            }
            child.relax_argmin = sol.y;
            let before = inc.value;
            consider_candidate(dc, &child.relax_argmin, opts, &mut inc, &mut sco_restarts)?;
            if inc.value < before {
                let cutoff = inc.value - eps;
                let mut dropped = f64::INFINITY;
                heap.retain(|o: &Open| {
                    let keep = o.0.lower < cutoff;
                    if !keep {
                        dropped = dropped.min(o.0.lower);
                    }
                    keep
                });
                closed_lower = closed_lower.min(dropped);
            }
            kept.push(child);
        }
        for child in kept {
            if child.lower < inc.value - eps {
                heap.push(Open(child));
            } else {
                closed_lower = closed_lower.min(child.lower);
            }
        }

        if let Some(cb) = progress.as_mut() {
            let lower = heap
                .peek()
                .map_or(closed_lower, |o| o.0.lower.min(closed_lower));
            cb(&Progress {
                nodes_processed,
                upper: inc.value,
                lower: lower.min(inc.value),
                open_nodes: heap.len(),
            });
        }
    }

    let open_min = heap.peek().map_or(f64::INFINITY, |o| o.0.lower);
    let mut lower = open_min.min(closed_lower);
    if let Some(l) = exit_lower {
        lower = lower.min(l);
    }
    if inc.y.is_none() && status.is_optimal() {
        status = SolveStatus::new(
            StatusKind::Infeasible,
            "every node was pruned without finding a feasible point",
        );
    }
    if inc.y.is_some() {
        lower = lower.min(inc.value);
    }
    Ok(finish(inc, lower, status, nodes_processed, relaxations_solved, sco_restarts))
}

/// Applies the restart rule to a relaxation minimizer.
fn consider_candidate(
    dc: &DcInstance,
    y: &[f64],
    opts: &ScobbOptions,
    inc: &mut Incumbent,
    restarts: &mut usize,
) -> Result<()> {
    if y.len() != dc.dim() || !passes_guards(&dc.base, y, opts.eps) {
        return Ok(());
    }
    let f = dc.base.objective.value(y);
    let triggered = if opts.restart_on_every_improving_node {
        f < inc.value
    } else {
        f <= inc.value - opts.eps
    };
    if triggered {
        *restarts += 1;
        improve_from(dc, y, opts, inc)?;
    }
    Ok(())
}

/// Builds the liquidation instance and runs the full pipeline on it.
pub fn solve_liquidation(
    p: &LiquidationParams,
    opts: &ScobbOptions,
    progress: Option<&mut dyn FnMut(&Progress)>,
) -> Result<SolveReport> {
    let dc = DcInstance::new(build_qcqp(p)?)?;
    run_scobb(&dc, Some(p), opts, progress)
}
