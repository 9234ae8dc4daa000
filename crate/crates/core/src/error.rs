use thiserror::Error;

/// Errors produced by graph construction, the solvers and the data generators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The input data is malformed (non-finite values, empty data, ...).
    #[error("input error: {0}")]
    Input(String),
    /// Two operands disagree in length or shape.
    #[error("dimension error: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// An iterative method hit its iteration cap before meeting its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// The requested combination is not supported by the chosen solver.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Numerical breakdown that should not happen for valid input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
