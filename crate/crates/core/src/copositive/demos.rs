//! Two small instances where the copositive dual misbehaves: one whose dual
//! is infeasible although the primal value is finite, and one whose dual
//! optimum is not attained.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;
use crate::exact::{solve_exact, DEFAULT_NODE_BUDGET};
use crate::lift::{build_lifting, complementarity_matrix};
use crate::model::{to_standard_form, Graph, MbqpInstance, RawConstraint, RawProblem, Relation};

/// `min x₁² − x₂²  s.t.  x₁ − x₂ = 0, x ≥ 0`, whose value is 0.
pub fn gap_instance() -> MbqpInstance {
    let raw = RawProblem {
        quad: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        linear: DVector::zeros(2),
        constraints: vec![RawConstraint::new(vec![1.0, -1.0], Relation::Eq, 0.0)],
        binaries: vec![],
    };
    to_standard_form(&raw).expect("gap instance is well formed")
}

/// `y(ε)ᵀMy(ε)` for `y(ε) = (0, 1, 1 + ε)` and the dual matrix of the gap
/// instance at `(θ, α, β)`.
pub fn gap_witness_value(theta: f64, alpha: f64, beta: f64, eps: f64) -> f64 {
    let lift = build_lifting(&gap_instance());
    let m = &lift.objective
        + &lift.row_linear[0] * alpha
        + &lift.row_quad[0] * beta
        + &lift.homog * theta;
    let y = DVector::from_vec(vec![0.0, 1.0, 1.0 + eps]);
    y.dot(&(&m * &y))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Largest ε in `{10⁻¹, …, 10⁻⁶}` giving a negative value, if any.
    pub eps: Option<f64>,
    pub value: f64,
    /// `−2ε + (β − 1)ε²`.
    pub formula: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// Every grid point had a negative witness.
    pub all_refuted: bool,
    pub max_formula_error: f64,
}

/// Scans `(θ, α, β)` over `[−10, 10]³` in steps of 0.5 and exhibits, for
/// each, a nonnegative `y(ε)` with `y(ε)ᵀMy(ε) < 0`: no dual point is
/// feasible although the primal value is 0.
pub fn demo_gap_example() -> GapReport {
    let lift = build_lifting(&gap_instance());
    let grid: Vec<f64> = (0..=40).map(|k| -10.0 + 0.5 * k as f64).collect();
    let epsilons: Vec<f64> = (1..=6).map(|p| 10f64.powi(-p)).collect();
    let mut rows = Vec::with_capacity(grid.len().pow(3));
    let mut all_refuted = true;
    let mut max_err: f64 = 0.0;
    for &theta in &grid {
        for &alpha in &grid {
            for &beta in &grid {
                let m = &lift.objective
                    + &lift.row_linear[0] * alpha
                    + &lift.row_quad[0] * beta
                    + &lift.homog * theta;
                let mut found = None;
                for &eps in &epsilons {
                    let y = DVector::from_vec(vec![0.0, 1.0, 1.0 + eps]);
                    let value = y.dot(&(&m * &y));
                    let formula = -2.0 * eps + (beta - 1.0) * eps * eps;
                    max_err = max_err.max((value - formula).abs());
                    if value <= -1e-9 {
                        found = Some((eps, value, formula));
                        break;
                    }
                }
                match found {
                    Some((eps, value, formula)) => rows.push(GapRow {
                        theta,
                        alpha,
                        beta,
                        eps: Some(eps),
                        value,
                        formula,
                    }),
                    None => {
                        all_refuted = false;
                        rows.push(GapRow {
                            theta,
                            alpha,
                            beta,
                            eps: None,
                            value: f64::NAN,
                            formula: f64::NAN,
                        });
                    }
                }
            }
        }
    }
    GapReport {
        rows,
        all_refuted,
        max_formula_error: max_err,
    }
}

/// Stable-set program on `graph` in the form
/// `min −2Σx  s.t.  x_u + x_v + s_e = 1 per edge`, `x` binary, as an
/// instance (complement rows added) for exact solving.
pub fn stable_set_instance(graph: &Graph) -> Result<MbqpInstance> {
    let nv = graph.num_vertices();
    let constraints = graph
        .edges()
        .iter()
        .map(|&(u, v)| {
            let mut row = vec![0.0; nv];
            row[u] = 1.0;
            row[v] = 1.0;
            RawConstraint::new(row, Relation::Le, 1.0)
        })
        .collect();
    to_standard_form(&RawProblem::linear(
        vec![-1.0; nv],
        constraints,
        (0..nv).collect(),
    ))
}

/// Symmetric dual candidate `(μ, β, γ, θ)`: every edge row gets squared
/// penalty weight `μ` and quadratic weight `β`, every vertex gets `γ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NonattainmentCandidate {
    pub mu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonattainmentRow {
    pub candidate: NonattainmentCandidate,
    /// `y₁ = (1; ½e; 0)`.
    pub at_half: f64,
    /// Homogenizing coordinate raised to `1 + ε` at a single-vertex point.
    pub at_raised: f64,
    /// Homogenizing coordinate lowered to `1 − ε`.
    pub at_lowered: f64,
    /// One vertex coordinate raised to `1 + ε`.
    pub at_bumped: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonattainmentReport {
    pub clique_size: usize,
    pub eps: f64,
    /// Exact stable-set value `−2·α(K)`.
    pub exact_value: f64,
    pub rows: Vec<NonattainmentRow>,
}

/// Lifted matrices of the edge form of the clique stable-set program:
/// variables `(t; x; s)`.
struct CliqueLift {
    dim: usize,
    objective: DMatrix<f64>,
    penalty: DMatrix<f64>,
    quad: DMatrix<f64>,
    comp: DMatrix<f64>,
    homog: DMatrix<f64>,
    graph: Graph,
}

impl CliqueLift {
    fn new(k: usize) -> Self {
        let graph = Graph::complete(k);
        let ne = graph.edges().len();
        let dim = 1 + k + ne;
        let mut objective = DMatrix::zeros(dim, dim);
        for v in 0..k {
            objective[(0, v + 1)] = -1.0;
            objective[(v + 1, 0)] = -1.0;
        }
        let mut penalty = DMatrix::zeros(dim, dim);
        let mut quad = DMatrix::zeros(dim, dim);
        for (e, &(u, v)) in graph.edges().iter().enumerate() {
            let mut a = DVector::zeros(dim);
            a[u + 1] = 1.0;
            a[v + 1] = 1.0;
            a[1 + k + e] = 1.0;
            quad += &a * a.transpose();
            a[0] = -1.0;
            penalty += &a * a.transpose();
        }
        let mut comp = DMatrix::zeros(dim, dim);
        for v in 0..k {
            comp += complementarity_matrix(dim, v);
        }
        let mut homog = DMatrix::zeros(dim, dim);
        homog[(0, 0)] = 1.0;
        CliqueLift {
            dim,
            objective,
            penalty,
            quad,
            comp,
            homog,
            graph,
        }
    }

    fn matrix(&self, c: &NonattainmentCandidate) -> DMatrix<f64> {
        &self.objective + &self.penalty * c.mu + &self.quad * c.beta + &self.comp * c.gamma + &self.homog * c.theta
    }

    /// `(t; e_v; s)` with `s_e = 0` on edges at `v` and 1 elsewhere, then
    /// `x_v` set to `xv`.
    fn vertex_point(&self, v: usize, t: f64, xv: f64) -> DVector<f64> {
        let k = self.graph.num_vertices();
        let mut y = DVector::zeros(self.dim);
        y[0] = t;
        y[v + 1] = xv;
        for (e, &(a, b)) in self.graph.edges().iter().enumerate() {
            y[1 + k + e] = if a == v || b == v { 0.0 } else { 1.0 };
        }
        y
    }

    fn half_point(&self) -> DVector<f64> {
        let k = self.graph.num_vertices();
        let mut y = DVector::zeros(self.dim);
        y[0] = 1.0;
        for v in 0..k {
            y[v + 1] = 0.5;
        }
        y
    }
}

/// Default candidates: a grid over `(μ, β, γ)` with `θ = 2 − |E|β`, so the
/// dual objective equals the optimal value −2.
pub fn default_nonattainment_candidates(k: usize) -> Vec<NonattainmentCandidate> {
    let ne = (k * (k - 1) / 2) as f64;
    let mut out = Vec::new();
    for mu in [0.0, 1.0, 10.0] {
        for beta in [-0.5, 0.0, 0.05, 0.1] {
            for gamma in [-3.0, -2.0, -4.0 / 3.0, -1.0, 0.0] {
                out.push(NonattainmentCandidate {
                    mu,
                    beta,
                    gamma,
                    theta: 2.0 - ne * beta,
                });
            }
        }
    }
    out
}

/// Evaluates every candidate at the four test points. A symmetric
/// candidate attaining the optimal value would need all four values to be
/// nonnegative for small `ε`; this only illustrates the argument.
pub fn demo_nonattainment(
    clique_size: usize,
    candidates: Option<Vec<NonattainmentCandidate>>,
    eps: f64,
) -> Result<NonattainmentReport> {
    let lift = CliqueLift::new(clique_size);
    let exact = solve_exact(&stable_set_instance(&lift.graph)?, DEFAULT_NODE_BUDGET)?;
    let candidates = candidates.unwrap_or_else(|| default_nonattainment_candidates(clique_size));
    let half = lift.half_point();
    let raised = lift.vertex_point(0, 1.0 + eps, 1.0);
    let lowered = lift.vertex_point(0, 1.0 - eps, 1.0);
    let bumped = lift.vertex_point(0, 1.0, 1.0 + eps);
    let rows = candidates
        .into_iter()
        .map(|c| {
            let m = lift.matrix(&c);
            let q = |y: &DVector<f64>| y.dot(&(&m * y));
            let (a, b, d, e) = (q(&half), q(&raised), q(&lowered), q(&bumped));
            NonattainmentRow {
                candidate: c,
                at_half: a,
                at_raised: b,
                at_lowered: d,
                at_bumped: e,
                violated: a.min(b).min(d).min(e) < 0.0,
            }
        })
        .collect();
    Ok(NonattainmentReport {
        clique_size,
        eps,
        exact_value: exact.value,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_values() {
        assert!((gap_witness_value(0.0, 0.0, 1.0, 0.1) + 0.2).abs() < 1e-12);
        assert!((gap_witness_value(0.0, 0.0, 2.0, 0.1) + 0.19).abs() < 1e-12);
    }

    #[test]
    fn half_point_boundary() {
        // y₁ᵀMy₁ = −4 − 3γ on K₆ once 15β + θ = 2
        let lift = CliqueLift::new(6);
        let c = NonattainmentCandidate {
            mu: 3.0,
            beta: 0.1,
            gamma: -4.0 / 3.0,
            theta: 0.5,
        };
        let v = lift.half_point();
        let val = v.dot(&(lift.matrix(&c) * &v));
        assert!(val.abs() < 1e-12);
    }

    #[test]
    fn raised_and_lowered_disagree() {
        let report = demo_nonattainment(
            6,
            Some(vec![NonattainmentCandidate {
                mu: 1.0,
                beta: 0.1,
                gamma: -2.0,
                theta: 0.5,
            }]),
            1e-3,
        )
        .unwrap();
        assert!((report.exact_value + 2.0).abs() < 1e-9);
        let row = &report.rows[0];
        // θ − γ − 1 = 1.5 ≠ 0: the ε-terms have opposite signs
        assert!(row.at_raised > 0.0 && row.at_lowered < 0.0);
        assert!(row.violated);
    }
}
