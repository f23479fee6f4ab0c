use std::fmt;

use super::OperatingPoint;
use crate::grid_io::{BusId, GridCase};

#[derive(Debug, Clone, PartialEq)]
pub enum LimitViolation {
    Voltage {
        bus: BusId,
        v_mag: f64,
        v_min: f64,
        v_max: f64,
    },
    /// `branch` is the position in the case's branch list.
    Flow {
        branch: usize,
        apparent: f64,
        rating: f64,
    },
}

impl fmt::Display for LimitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitViolation::Voltage {
                bus,
                v_mag,
                v_min,
                v_max,
            } => write!(f, "bus {bus}: |V| = {v_mag:.4} outside [{v_min}, {v_max}]"),
            LimitViolation::Flow {
                branch,
                apparent,
                rating,
            } => write!(f, "branch {branch}: |S| = {apparent:.4} above rating {rating}"),
        }
    }
}

/// Voltage-band and branch-rating violations of a solved point. Branches with
/// rating 0 are unlimited.
pub fn check_limits(case: &GridCase, op: &OperatingPoint) -> Vec<LimitViolation> {
    let mut out = Vec::new();
    for (b, &v) in case.buses.iter().zip(&op.v_mag) {
        if v < b.v_min || v > b.v_max {
            out.push(LimitViolation::Voltage {
                bus: b.id,
                v_mag: v,
                v_min: b.v_min,
                v_max: b.v_max,
            });
        }
    }
    for (k, br) in case.branches.iter().enumerate() {
        if br.rating <= 0.0 {
            continue;
        }
        let apparent = op.line_p[k].hypot(op.line_q[k]);
        if apparent > br.rating {
            out.push(LimitViolation::Flow {
                branch: k,
                apparent,
                rating: br.rating,
            });
        }
    }
    out
}
