//! Classical-machine linearisation, dense eigenvalues and N-1 damping screening.

mod eigen;
mod label;
mod state_matrix;

use num_complex::Complex64;

use crate::error::SmallSignalError;

pub use eigen::eigenvalues;
pub use label::{label_operating_point, ContingencyResult, DiscardReason, LabelOptions, SecurityLabel};
pub use state_matrix::{build_state_matrix, internal_emfs, StateMatrix, OMEGA_60HZ};

/// Modes with `|omega|` at or below this (rad/s) are not treated as oscillatory.
pub const OMEGA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub sigma: f64,
    pub omega: f64,
    pub zeta: f64,
}

/// `zeta = -sigma / |sigma + j·omega|`.
pub fn damping_ratio(sigma: f64, omega: f64) -> Result<f64, SmallSignalError> {
    if sigma == 0.0 && omega == 0.0 {
        return Err(SmallSignalError::OriginMode);
    }
    Ok((-sigma / sigma.hypot(omega)).clamp(-1.0, 1.0))
}

/// Eigenvalues of `a` as modes. Eigenvalues at the origin get `zeta = NaN`
/// since they carry no damping information.
pub fn modes(a: &nalgebra::DMatrix<f64>) -> Result<Vec<Mode>, SmallSignalError> {
    Ok(eigenvalues(a)?
        .into_iter()
        .map(|l: Complex64| Mode {
            sigma: l.re,
            omega: l.im,
            zeta: damping_ratio(l.re, l.im).unwrap_or(f64::NAN),
        })
        .collect())
}

/// Smallest damping ratio over modes with `|omega| > omega_floor`, or `+inf`
/// if there are none.
pub fn min_oscillatory_zeta(modes: &[Mode], omega_floor: f64) -> f64 {
    modes
        .iter()
        .filter(|m| m.omega.abs() > omega_floor)
        .map(|m| m.zeta)
        .fold(f64::INFINITY, f64::min)
}
