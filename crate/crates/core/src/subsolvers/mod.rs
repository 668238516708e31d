//! Inner solvers called by the outer algorithms.

mod barrier;
mod simplex;
mod triangle;

pub use barrier::{solve_convex_qcqp, solve_convex_qcqp_from, BarrierOptions, ConvexSolution};
pub use simplex::{solve_lp, LpSolution, LpStatus};
pub use triangle::{triangle2d_min, Triangle2dProblem};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatusKind {
    Optimal,
    Infeasible,
    IterLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub kind: StatusKind,
    pub message: String,
}

impl SolveStatus {
    pub fn optimal() -> Self {
        Self::new(StatusKind::Optimal, "")
    }

    pub fn new(kind: StatusKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.kind == StatusKind::Optimal
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.message.is_empty() {
            write!(f, "{:?}", self.kind)
        } else {
            write!(f, "{:?}: {}", self.kind, self.message)
        }
    }
}
