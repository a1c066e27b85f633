use std::path::PathBuf;

use crate::solver::NewtonReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("mesh topology: {0}")]
    Topology(String),

    #[error("temperature must be positive, got {0}")]
    Domain(f64),

    #[error("nonpositive temperature {value} encountered in element {element}")]
    PositivityViolation { element: usize, value: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("newton did not converge after {} iterations (increment {:.3e})", .0.iterations, .0.increment_norm)]
    NonConvergence(Box<NewtonReport>),

    #[error("temperature positivity could not be restored after full damping")]
    PositivityFailure(Box<NewtonReport>),

    #[error("config {path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
