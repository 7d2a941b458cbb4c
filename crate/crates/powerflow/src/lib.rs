//! AC power flow and the optimal power flow problem as a black-box oracle.

pub mod case;
pub mod flow;
pub mod opf;
pub mod synthetic;

pub use case::{parse_case, CaseError, GridCase};
pub use flow::{branch_flows, solve_power_flow, Dispatch, Network, PowerFlowError, PowerFlowModel, PowerFlowOptions, PowerFlowSolution};
pub use opf::OpfProblem;

/// The 30-bus case used by the OPF experiment, with its start dispatch as
/// the generator setpoints.
pub const CASE30: &str = include_str!("../data/case30_as.m");

/// Slack bus feeding a 50 MW load over a lossless 0.1 p.u. reactance.
pub const TWO_BUS: &str = include_str!("../data/two_bus.m");
