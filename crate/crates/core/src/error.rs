use crate::gradient::GradientError;
use crate::lp::LpError;
use crate::oracle::OracleError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("start point is not strictly feasible (max constraint {max_constraint:e})")]
    InfeasibleStart { max_constraint: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Lp(#[from] LpError),
}
