//! Command-line plumbing: problem loading, trace files and check suites.

pub mod checks;
pub mod problem;
pub mod trace;
