//! Numerical tolerances shared by every solver.

use serde::{Deserialize, Serialize};

/// One record holding every tolerance the kernels use. Callers that need a
/// tighter or looser run clone [`Tolerances::default`] and override fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Simplex pivot and reduced-cost threshold.
    pub lp_pivot: f64,
    /// Primal feasibility threshold used to classify LP outcomes.
    pub lp_feasibility: f64,
    /// Stopping threshold for the QP splitting iteration (primal and dual).
    pub qp_residual: f64,
    /// Iteration cap for the QP splitting iteration.
    pub qp_max_iter: usize,
    /// Stopping threshold for the SDP splitting iteration.
    pub sdp_residual: f64,
    /// Iteration cap for the SDP splitting iteration.
    pub sdp_max_iter: usize,
    /// Integrality threshold for binary variables.
    pub integrality: f64,
    /// Symmetry check threshold for matrices supplied by callers.
    pub symmetry: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lp_pivot: 1e-9,
            lp_feasibility: 1e-7,
            qp_residual: 1e-6,
            qp_max_iter: 200_000,
            sdp_residual: 1e-6,
            sdp_max_iter: 100_000,
            integrality: 1e-6,
            symmetry: 1e-9,
        }
    }
}
