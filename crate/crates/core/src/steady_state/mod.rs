//! Operating-point sampling, AC power flow and limit checks.

mod limits;
mod power_flow;
mod profile;

pub use limits::{check_limits, LimitViolation};
pub use power_flow::{
    branch_end_flows, bus_admittance, compute_line_flows, solve_power_flow, OperatingPoint,
    PowerFlowOptions,
};
pub use profile::{scale_profile, ScaledProfile};
