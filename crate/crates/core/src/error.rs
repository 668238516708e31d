use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "eigendecomposition did not converge after {sweeps} sweeps \
         (n = {n}, off-diagonal norm {off_norm:.3e}, frobenius norm {frob_norm:.3e})"
    )]
    EigenNotConverged {
        n: usize,
        sweeps: usize,
        off_norm: f64,
        frob_norm: f64,
    },

    /// A model parameter violates one of the modelling assumptions.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An inner solver gave up; the message carries its status.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
