use crate::error::{PowerFlowError, SmallSignalError};
use crate::grid_io::GridCase;
use crate::par;
use crate::steady_state::{solve_power_flow, OperatingPoint, PowerFlowOptions};

use super::{build_state_matrix, min_oscillatory_zeta, modes, OMEGA_60HZ, OMEGA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelOptions {
    /// Minimum acceptable damping ratio, inclusive.
    pub threshold: f64,
    pub omega_floor: f64,
    pub omega_s: f64,
    /// Solve a fresh power flow on the outaged network instead of reusing
    /// the pre-outage point.
    pub resolve_power_flow: bool,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            threshold: 0.03,
            omega_floor: OMEGA_FLOOR,
            omega_s: OMEGA_60HZ,
            resolve_power_flow: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscardReason {
    NonConvergence,
    LimitViolation(String),
    Islanding { branch: usize },
    /// The re-solved post-outage power flow did not converge.
    PostOutageDivergence { branch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContingencyResult {
    pub branch: usize,
    /// `-inf` for an islanding outage, `+inf` if no oscillatory mode exists.
    pub min_zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityLabel {
    pub secure: bool,
    pub min_zeta: f64,
    pub per_contingency: Vec<ContingencyResult>,
    pub discarded: Option<DiscardReason>,
}

enum Outcome {
    Zeta(f64),
    Islanded,
    Diverged,
}

fn screen_one(
    case: &GridCase,
    op: &OperatingPoint,
    branch: usize,
    opts: &LabelOptions,
) -> Result<Outcome, SmallSignalError> {
    let reduced;
    let post_op;
    let (case_used, op_used, outage) = if opts.resolve_power_flow {
        let mut c = case.clone();
        c.branches.remove(branch);
        post_op = match solve_power_flow(&c, PowerFlowOptions::default()) {
            Ok(p) if p.converged => p,
            Ok(_) | Err(PowerFlowError::SingularJacobian { .. } | PowerFlowError::NoConvergence { .. }) => {
                return Ok(Outcome::Diverged)
            }
            Err(PowerFlowError::Disconnected { .. }) => return Ok(Outcome::Islanded),
        };
        reduced = c;
        (&reduced, &post_op, None)
    } else {
        (case, op, Some(branch))
    };
    let sm = match build_state_matrix(case_used, op_used, outage, opts.omega_s) {
        Ok(sm) => sm,
        Err(SmallSignalError::Islanding { .. }) => return Ok(Outcome::Islanded),
        Err(e) => return Err(e),
    };
    Ok(Outcome::Zeta(min_oscillatory_zeta(&modes(&sm.a)?, opts.omega_floor)))
}

/// Screens every branch outage in `contingencies` (indices into
/// `case.branches`). The point is secure iff each outage's worst oscillatory
/// damping ratio is at least `opts.threshold`. Outages are evaluated in
/// parallel; `per_contingency` is sorted by branch index.
pub fn label_operating_point(
    case: &GridCase,
    op: &OperatingPoint,
    contingencies: &[usize],
    opts: &LabelOptions,
) -> Result<SecurityLabel, SmallSignalError> {
    if !op.converged {
        return Err(SmallSignalError::BadOperatingPoint("power flow not converged".into()));
    }
    if let Some(&b) = contingencies.iter().find(|&&b| b >= case.branches.len()) {
        return Err(SmallSignalError::BadOperatingPoint(format!("no branch {b}")));
    }
    let mut order = contingencies.to_vec();
    order.sort_unstable();
    order.dedup();
    let outcomes = par::map(&order, |&b| {
        screen_one(case, op, b, opts).map_err(|e| SmallSignalError::Contingency {
            branch: b,
            source: Box::new(e),
        })
    });

    let mut per_contingency = Vec::with_capacity(contingencies.len());
    let mut discarded = None;
    for (&branch, outcome) in order.iter().zip(outcomes) {
        let min_zeta = match outcome? {
            Outcome::Zeta(z) => z,
            Outcome::Islanded => {
                discarded.get_or_insert(DiscardReason::Islanding { branch });
                f64::NEG_INFINITY
            }
            Outcome::Diverged => {
                discarded.get_or_insert(DiscardReason::PostOutageDivergence { branch });
                f64::NEG_INFINITY
            }
        };
        per_contingency.push(ContingencyResult { branch, min_zeta });
    }
    let min_zeta = per_contingency
        .iter()
        .map(|c| c.min_zeta)
        .fold(f64::INFINITY, f64::min);
    Ok(SecurityLabel {
        secure: discarded.is_none() && min_zeta >= opts.threshold,
        min_zeta,
        per_contingency,
        discarded,
    })
}
