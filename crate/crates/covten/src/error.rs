//! Error type shared across the crate.

use std::fmt;
use std::io;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong building models, fitting, or doing I/O.
#[derive(Debug)]
pub enum Error {
    /// Incompatible shapes (factor sizes, vector lengths, tensor dims).
    Shape(String),
    /// A mode index outside `0..order`.
    ModeOutOfRange { mode: usize, order: usize },
    /// A coordinate outside the declared dims.
    CoordOutOfRange { coord: Vec<usize>, dims: Vec<usize> },
    /// The same coordinate appears twice in an observation list.
    DuplicateCoordinate { coord: Vec<usize> },
    /// A sparsity budget outside `1..=len`.
    BudgetOutOfRange { budget: usize, len: usize },
    /// An operation that needs a coupled mode was given an uncoupled one.
    NotCoupled { mode: usize },
    /// Model ranks disagree where they must match.
    RankMismatch { expected: usize, found: usize },
    /// A factor update collapsed (zero vector after truncation or zero weight).
    Degenerate(String),
    /// Every restart of a fit hit a degenerate component.
    AllRestartsDegenerate { restarts: usize },
    /// An operation that needs observed entries was given none.
    NoObservations,
    /// Power iteration failed to settle within the configured cap.
    SvdNoConvergence { iters: usize },
    /// Malformed input file; line numbers are 1-based.
    Parse { line: usize, message: String },
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::ModeOutOfRange { mode, order } => {
                write!(f, "mode {mode} out of range for order-{order} tensor")
            }
            Error::CoordOutOfRange { coord, dims } => {
                write!(f, "coordinate {coord:?} out of range for dims {dims:?}")
            }
            Error::DuplicateCoordinate { coord } => {
                write!(f, "duplicate coordinate {coord:?}")
            }
            Error::BudgetOutOfRange { budget, len } => {
                write!(f, "sparsity budget {budget} out of range 1..={len}")
            }
            Error::NotCoupled { mode } => write!(f, "mode {mode} has no coupled covariate"),
            Error::RankMismatch { expected, found } => {
                write!(f, "rank mismatch: expected {expected}, found {found}")
            }
            Error::Degenerate(msg) => write!(f, "degenerate component: {msg}"),
            Error::AllRestartsDegenerate { restarts } => {
                write!(f, "all {restarts} restarts ended in a degenerate component")
            }
            Error::NoObservations => write!(f, "no observed entries"),
            Error::SvdNoConvergence { iters } => {
                write!(f, "power iteration did not converge within {iters} iterations")
            }
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
