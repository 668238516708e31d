//! Global optimization of nonconvex quadratically constrained quadratic
//! programs through a difference-of-convex split of every quadratic form.
//!
//! The pipeline has four stages:
//!
//! * [`cutplane`]: Lagrangian cutting planes that produce dual multipliers
//!   and a feasible starting point for the liquidation model;
//! * [`sco`]: sequential convex optimization, which linearizes the concave
//!   parts at the current point and converges to a feasible local solution;
//! * [`lowerbound`]: McCormick-type convex underestimators over a box;
//! * [`scobb`]: best-first branch-and-bound combining the two bounds.
//!
//! [`liquidation`] builds the two-period portfolio liquidation instances that
//! serve as the main instance family, and [`generator`], [`oracle`], [`io`]
//! and [`bench`] support the command-line harness.

pub mod bench;
pub mod cutplane;
pub mod error;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod liquidation;
pub mod lowerbound;
pub mod oracle;
pub mod qcqp;
pub mod sco;
pub mod scobb;
pub mod spectral;
pub mod subsolvers;

pub use error::{Error, Result};
