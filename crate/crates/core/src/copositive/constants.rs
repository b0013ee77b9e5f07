//! Instance constants used to size the closed-form certificate.

use nalgebra::{DMatrix, DVector};

use super::verify::{check_partition_with, PartitionOptions};
use crate::error::{Error, Result};
use crate::lift::Lifting;
use crate::model::{MbqpInstance, Relation};
use crate::numerics::{solve_lp, sym_eigen, LpProblem, SolveStatus};

/// Small LP assembled row by row; inequality rows get their own slack.
struct LpBuilder {
    num_vars: usize,
    cost: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Relation, f64)>,
}

impl LpBuilder {
    fn new(num_vars: usize) -> Self {
        LpBuilder {
            num_vars,
            cost: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    fn row(&mut self, terms: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        self.rows.push((terms, rel, rhs));
    }

    fn solve(&self) -> Result<(SolveStatus, f64)> {
        let slacks = self.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let total = self.num_vars + slacks;
        let mut e = DMatrix::zeros(self.rows.len(), total);
        let mut h = DVector::zeros(self.rows.len());
        let mut next = self.num_vars;
        for (i, (terms, rel, rhs)) in self.rows.iter().enumerate() {
            for &(j, v) in terms {
                e[(i, j)] += v;
            }
            match rel {
                Relation::Le => {
                    e[(i, next)] = 1.0;
                    next += 1;
                }
                Relation::Ge => {
                    e[(i, next)] = -1.0;
                    next += 1;
                }
                Relation::Eq => {}
            }
            h[i] = *rhs;
        }
        let mut cost = DVector::zeros(total);
        for (j, &c) in self.cost.iter().enumerate() {
            cost[j] = c;
        }
        let out = solve_lp(&LpProblem::new(cost, e, h))?;
        Ok((out.status, out.objective))
    }
}

fn binary_index(inst: &MbqpInstance, j: usize) -> Result<()> {
    if inst.binaries.contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "variable {} is not binary",
            j + 1
        )))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// `min h  s.t. |aᵢᵀx − shiftᵢ| ≤ h, x ≥ 0, x_j ≥ floor`.
fn residual_lp(inst: &MbqpInstance, j: usize, shift: &DVector<f64>, floor: f64) -> Result<f64> {
    let n = inst.num_vars();
    let h = n;
    let mut lp = LpBuilder::new(n + 1);
    lp.cost[h] = 1.0;
    for i in 0..inst.num_rows() {
        let mut up: Vec<(usize, f64)> = (0..n)
            .filter(|&k| inst.constraints[(i, k)] != 0.0)
            .map(|k| (k, inst.constraints[(i, k)]))
            .collect();
        let mut down: Vec<(usize, f64)> = up.iter().map(|&(k, v)| (k, -v)).collect();
        up.push((h, -1.0));
        down.push((h, -1.0));
        lp.row(up, Relation::Le, shift[i]);
        lp.row(down, Relation::Le, -shift[i]);
    }
    lp.row(vec![(j, 1.0)], Relation::Ge, floor);
    let (status, value) = lp.solve()?;
    match status {
        SolveStatus::Optimal => {
            if value <= 1e-12 {
                Err(Error::ModelViolation(format!(
                    "x_{} can grow without moving any row: binaries are not bounded by the constraints",
                    j + 1
                )))
            } else {
                Ok(value)
            }
        }
        other => Err(Error::Solver(format!("auxiliary LP ended with {other:?}"))),
    }
}

/// Smallest possible `maxᵢ |aᵢᵀx|` over `x ≥ 0` with `x_j ≥ η`.
pub fn compute_hj(inst: &MbqpInstance, j: usize, eta: f64) -> Result<f64> {
    binary_index(inst, j)?;
    positive("eta", eta)?;
    residual_lp(inst, j, &DVector::zeros(inst.num_rows()), eta)
}

/// Smallest possible `maxᵢ |aᵢᵀx − bᵢ|` over `x ≥ 0` with `x_j ≥ 1 + η`.
pub fn compute_uj(inst: &MbqpInstance, j: usize, eta: f64) -> Result<f64> {
    binary_index(inst, j)?;
    positive("eta", eta)?;
    residual_lp(inst, j, &inst.rhs, 1.0 + eta)
}

/// Lower bound on `maxᵢ |aᵢᵀx − bᵢ| / v` over `x ≥ 0`, `x_j ≥ 1 + v`,
/// `v ≥ min{r/4g, 1}`, computed through the Charnes–Cooper LP. Returns
/// `+∞` when no such `x` exists.
pub fn compute_pj(inst: &MbqpInstance, j: usize, r: f64, g: f64) -> Result<f64> {
    binary_index(inst, j)?;
    positive("r", r)?;
    positive("g", g)?;
    let n = inst.num_vars();
    let kappa = (r / (4.0 * g)).min(1.0);
    // columns: x̃ (n), ψ̃, ṽ, s
    let (psi, v, s) = (n, n + 1, n + 2);
    let mut lp = LpBuilder::new(n + 3);
    lp.cost[psi] = 1.0;
    for i in 0..inst.num_rows() {
        let a: Vec<(usize, f64)> = (0..n)
            .filter(|&k| inst.constraints[(i, k)] != 0.0)
            .map(|k| (k, inst.constraints[(i, k)]))
            .collect();
        let bi = inst.rhs[i];
        let mut up = a.clone();
        up.extend([(s, -bi), (psi, -1.0)]);
        lp.row(up, Relation::Le, 0.0);
        let mut down: Vec<(usize, f64)> = a.iter().map(|&(k, val)| (k, -val)).collect();
        down.extend([(s, bi), (psi, -1.0)]);
        lp.row(down, Relation::Le, 0.0);
    }
    lp.row(vec![(j, 1.0), (s, -1.0), (v, -1.0)], Relation::Ge, 0.0);
    lp.row(vec![(v, 1.0), (s, -kappa)], Relation::Ge, 0.0);
    lp.row(vec![(v, 1.0)], Relation::Eq, 1.0);
    let (status, value) = lp.solve()?;
    match status {
        SolveStatus::Infeasible => Ok(f64::INFINITY),
        SolveStatus::Optimal if value > 1e-12 => Ok(value),
        SolveStatus::Optimal => Err(Error::ModelViolation(format!(
            "x_{} can exceed 1 without violating any row",
            j + 1
        ))),
        other => Err(Error::Solver(format!("auxiliary LP ended with {other:?}"))),
    }
}

/// Constants of the unbounded-region construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RhoInfo {
    /// Optimal value of the LP bounding how slowly a descent ray can
    /// violate the rows.
    pub violation_rate: f64,
    pub lambda0: f64,
    pub rho: f64,
}

/// Factors `Q = VᵀV` and solves `min φ  s.t. 2cᵀx = −1, |Vx| ≤ φ, |Ax| ≤ φ,
/// x ≥ 0`. Returns `None` when no descent direction exists (the LP is
/// infeasible), in which case `ρ` is not needed.
pub fn compute_rho(inst: &MbqpInstance, l: f64) -> Result<Option<RhoInfo>> {
    let n = inst.num_vars();
    let eig = sym_eigen(&inst.quad)?;
    let scale = eig.values.amax().max(1.0);
    if eig.values.min() < -1e-9 * scale {
        return Err(Error::NotPsd(eig.values.min()));
    }
    let factor_rows: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.values[k] > 1e-12 * scale)
        .map(|k| eig.vectors.column(k) * eig.values[k].sqrt())
        .collect();
    let phi = n;
    let mut lp = LpBuilder::new(n + 1);
    lp.cost[phi] = 1.0;
    lp.row(
        (0..n).map(|k| (k, 2.0 * inst.linear[k])).collect(),
        Relation::Eq,
        -1.0,
    );
    let mut bounded_rows: Vec<DVector<f64>> = factor_rows;
    bounded_rows.extend((0..inst.num_rows()).map(|i| inst.row(i)));
    for w in &bounded_rows {
        let terms: Vec<(usize, f64)> = (0..n).filter(|&k| w[k] != 0.0).map(|k| (k, w[k])).collect();
        let mut up = terms.clone();
        up.push((phi, -1.0));
        lp.row(up, Relation::Le, 0.0);
        let mut down: Vec<(usize, f64)> = terms.iter().map(|&(k, v)| (k, -v)).collect();
        down.push((phi, -1.0));
        lp.row(down, Relation::Le, 0.0);
    }
    let (status, value) = lp.solve()?;
    match status {
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Optimal if value > 1e-12 => {
            let sigma2 = value * value;
            // positive root of σ²λ² − 2λ − l; every λ works when it has none
            let disc = 1.0 + sigma2 * l;
            let lambda0 = if disc < 0.0 {
                0.0
            } else {
                ((1.0 + disc.sqrt()) / sigma2).max(0.0)
            };
            let row_term = inst
                .rhs
                .iter()
                .map(|b| (b.abs() + 1.0) / value)
                .fold(0.0, f64::max);
            Ok(Some(RhoInfo {
                violation_rate: value,
                lambda0,
                rho: lambda0.max(row_term),
            }))
        }
        SolveStatus::Optimal => Err(Error::ModelViolation(
            "objective decreases along a feasible ray: the problem is unbounded".into(),
        )),
        other => Err(Error::Solver(format!("auxiliary LP ended with {other:?}"))),
    }
}

/// Largest `k` (within 5%) with `H − kI` certified copositive by simplicial
/// partition, where `H = T + Σ AA_i`.
pub fn compute_k(lift: &Lifting) -> Result<f64> {
    compute_k_with(lift, &PartitionOptions::default())
}

pub fn compute_k_with(lift: &Lifting, opts: &PartitionOptions) -> Result<f64> {
    let h = &lift.regularizer;
    let dim = h.nrows();
    let top = sym_eigen(h)?.values.max();
    let certified = |k: f64| {
        let shifted = h - DMatrix::identity(dim, dim) * k;
        check_partition_with(&shifted, opts).is_copositive()
    };
    if top <= 0.0 {
        return Err(Error::ModelViolation("regularizer has no positive eigenvalue".into()));
    }
    if certified(top) {
        return Ok(top);
    }
    let mut hi = top;
    let mut lo = top / 2.0;
    let mut halvings = 0;
    while !certified(lo) {
        hi = lo;
        lo /= 2.0;
        halvings += 1;
        if halvings > 20 {
            return Err(Error::ModelViolation(
                "regularizer is not strictly copositive: the feasible region is unbounded".into(),
            ));
        }
    }
    while (hi - lo) > 0.05 * lo {
        let mid = 0.5 * (lo + hi);
        if certified(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::build_lifting;
    use crate::model::{to_standard_form, RawProblem};

    fn one_binary() -> MbqpInstance {
        to_standard_form(&RawProblem::linear(vec![-1.0], vec![], vec![0])).unwrap()
    }

    #[test]
    fn h_of_single_complement_row() {
        let inst = one_binary();
        assert!((compute_hj(&inst, 0, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((compute_hj(&inst, 0, 2.0).unwrap() - 2.0).abs() < 1e-9);
        assert!(compute_hj(&inst, 1, 1.0).is_err());
    }

    #[test]
    fn u_of_single_complement_row() {
        // x ≥ 1 + η forces x + w − 1 ≥ η
        let inst = one_binary();
        assert!((compute_uj(&inst, 0, 0.5).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn p_of_single_complement_row() {
        // residual v at x = 1 + v, ratio 1
        let inst = one_binary();
        assert!((compute_pj(&inst, 0, 1e-3, 1.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rho_without_descent_direction() {
        let inst = one_binary();
        // c = −1 on x; x is bounded so no ray, but the LP looks only at rays of Ax = 0
        let info = compute_rho(&inst, 0.0).unwrap().unwrap();
        assert!(info.rho >= info.lambda0);
        let flat = to_standard_form(&RawProblem::linear(vec![1.0], vec![], vec![0])).unwrap();
        assert!(compute_rho(&flat, 0.0).unwrap().is_none());
    }

    #[test]
    fn k_of_identity_like_regularizer() {
        let inst = MbqpInstance::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            vec![],
            Default::default(),
        )
        .unwrap();
        // H = I₂
        let k = compute_k(&build_lifting(&inst)).unwrap();
        assert!(k <= 1.0 + 1e-12 && k >= 0.95);
        let empty = MbqpInstance::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            vec![],
            Default::default(),
        )
        .unwrap();
        assert!(compute_k(&build_lifting(&empty)).is_err());
    }
}
