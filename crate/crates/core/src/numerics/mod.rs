//! Dense linear-algebra and optimization kernels: symmetric eigensolver,
//! PSD projection, a revised simplex LP solver and a splitting QP solver.

mod eigen;
mod lp;
mod qp;

pub use eigen::{
    check_symmetric, max_asymmetry, min_eigenvalue, project_psd, sym_eigen, symmetrize,
    SymEigen,
};
pub use lp::{solve_lp, solve_lp_with, LpProblem};
pub use qp::{solve_qp, solve_qp_with, QpProblem};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Termination status shared by the LP and QP solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Result of an LP or QP solve.
///
/// `duals` holds one multiplier per equality row with the convention
/// `d(objective)/d(rhs_i) = duals[i]`, so `objective + duals·Δh` is the
/// fixed-multiplier estimate of the value at a perturbed right-hand side.
/// `bound_duals` holds, per variable, the multiplier of its active bound
/// (positive at an active lower bound, negative at an active upper bound,
/// zero otherwise).
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub primal: DVector<f64>,
    pub duals: DVector<f64>,
    pub bound_duals: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl SolveOutcome {
    pub(crate) fn failed(status: SolveStatus, n: usize, m: usize, iterations: usize) -> Self {
        let objective = match status {
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        SolveOutcome {
            status,
            primal: DVector::zeros(n),
            duals: DVector::zeros(m),
            bound_duals: DVector::zeros(n),
            objective,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
