//! Safe zeroth-order optimization with linear-programming descent directions.
//!
//! Only function values are used, and every point the solver queries lies
//! inside the feasible region (given valid smoothness constants).

pub mod error;
pub mod gradient;
pub mod kkt;
pub mod localset;
pub mod lp;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod verify;

pub use error::SolverError;
pub use oracle::{Problem, SampleLedger, Sampler, Smoothness};
pub use solver::{run, Action, IterationTrace, RunReport, Solver, SolverConfig, Termination};
