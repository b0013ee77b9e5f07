use nalgebra::{DMatrix, DVector};

use super::{SolveOutcome, SolveStatus};
use crate::config::Tolerances;
use crate::error::{Error, Result};

/// `minimize costᵀz  s.t.  eq_matrix·z = rhs,  z ≥ 0` except for columns
/// flagged in `free`, which are unrestricted in sign.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub free: Vec<bool>,
}

impl LpProblem {
    pub fn new(cost: DVector<f64>, eq_matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        let n = cost.len();
        LpProblem {
            cost,
            eq_matrix,
            rhs,
            free: vec![false; n],
        }
    }

    pub fn with_free(mut self, free: Vec<bool>) -> Self {
        self.free = free;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        let m = self.rhs.len();
        if self.eq_matrix.nrows() != m || self.eq_matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "LP matrix is {}x{}, expected {}x{}",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols(),
                m,
                n
            )));
        }
        if self.free.len() != n {
            return Err(Error::Dimension(format!(
                "free flags cover {} columns, expected {}",
                self.free.len(),
                n
            )));
        }
        if self.cost.iter().chain(self.rhs.iter()).any(|v| !v.is_finite())
            || self.eq_matrix.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        Ok(())
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<SolveOutcome> {
    solve_lp_with(p, &Tolerances::default())
}

/// Two-phase revised simplex with an explicit basis inverse.
///
/// Dantzig pricing is used until `3·(rows+cols)` consecutive degenerate
/// pivots have been made; from then on Bland's rule guarantees termination.
pub fn solve_lp_with(p: &LpProblem, tol: &Tolerances) -> Result<SolveOutcome> {
    p.validate()?;
    let n0 = p.num_vars();
    let m = p.num_rows();

    // Free columns are split into a positive and a negative part.
    let free_cols: Vec<usize> = (0..n0).filter(|&j| p.free[j]).collect();
    let n = n0 + free_cols.len();
    let mut a = DMatrix::zeros(m, n);
    let mut cost = DVector::zeros(n);
    for j in 0..n0 {
        a.set_column(j, &p.eq_matrix.column(j));
        cost[j] = p.cost[j];
    }
    for (k, &j) in free_cols.iter().enumerate() {
        a.set_column(n0 + k, &(-p.eq_matrix.column(j)));
        cost[n0 + k] = -p.cost[j];
    }
    let mut h = p.rhs.clone();
    let mut flipped = vec![false; m];
    for i in 0..m {
        if h[i] < 0.0 {
            h[i] = -h[i];
            a.row_mut(i).neg_mut();
            flipped[i] = true;
        }
    }

    // Artificial columns n..n+m.
    let total = n + m;
    let mut full = DMatrix::zeros(m, total);
    full.columns_mut(0, n).copy_from(&a);
    for i in 0..m {
        full[(i, n + i)] = 1.0;
    }

    let mut tab = Tableau {
        a: full,
        h: h.clone(),
        basis: (n..n + m).collect(),
        binv: DMatrix::identity(m, m),
        xb: h.clone(),
        pivots_since_refactor: 0,
        tol: tol.lp_pivot,
    };
    let max_iter = 50 * (m + total) + 1000;
    let degenerate_limit = 3 * (m + total);

    let mut phase1_cost = DVector::zeros(total);
    for i in 0..m {
        phase1_cost[n + i] = 1.0;
    }
    let allowed_p1 = vec![true; total];
    let mut iterations = 0usize;
    let status = tab.run(
        &phase1_cost,
        &allowed_p1,
        max_iter,
        degenerate_limit,
        &mut iterations,
    );
    if status == RunStatus::IterLimit {
        return Ok(SolveOutcome::failed(SolveStatus::IterLimit, n0, m, iterations));
    }
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(tab.xb.iter())
        .filter(|(&b, _)| b >= n)
        .map(|(_, &v)| v.max(0.0))
        .sum();
    if infeas > tol.lp_feasibility * (1.0 + h.amax()) {
        return Ok(SolveOutcome::failed(SolveStatus::Infeasible, n0, m, iterations));
    }

    // Drive zero-level artificials out of the basis where possible. Rows
    // whose artificial cannot leave are redundant; the artificial then stays
    // basic at zero because no structural column touches that row.
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        let row = tab.binv.row(r) * &tab.a.columns(0, n);
        let mut best = None;
        let mut best_val = 1e-7;
        for j in 0..n {
            if tab.basis.contains(&j) {
                continue;
            }
            if row[j].abs() > best_val {
                best_val = row[j].abs();
                best = Some(j);
            }
        }
        if let Some(j) = best {
            tab.pivot(r, j);
        }
    }

    let mut phase2_cost = DVector::zeros(total);
    phase2_cost.rows_mut(0, n).copy_from(&cost);
    let mut allowed_p2 = vec![true; total];
    for flag in allowed_p2.iter_mut().skip(n) {
        *flag = false;
    }
    let status = tab.run(
        &phase2_cost,
        &allowed_p2,
        max_iter,
        degenerate_limit,
        &mut iterations,
    );
    match status {
        RunStatus::IterLimit => {
            return Ok(SolveOutcome::failed(SolveStatus::IterLimit, n0, m, iterations))
        }
        RunStatus::Unbounded => {
            return Ok(SolveOutcome::failed(SolveStatus::Unbounded, n0, m, iterations))
        }
        RunStatus::Optimal => {}
    }
    tab.refactor();

    let mut z = DVector::zeros(total);
    for (r, &b) in tab.basis.iter().enumerate() {
        z[b] = tab.xb[r].max(0.0);
    }
    let cb = DVector::from_iterator(m, tab.basis.iter().map(|&b| phase2_cost[b]));
    let y = tab.binv.transpose() * cb;
    let reduced = &phase2_cost - tab.a.transpose() * &y;

    let mut primal = DVector::zeros(n0);
    let mut bound_duals = DVector::zeros(n0);
    for j in 0..n0 {
        primal[j] = z[j];
        bound_duals[j] = reduced[j];
    }
    for (k, &j) in free_cols.iter().enumerate() {
        primal[j] = z[j] - z[n0 + k];
        bound_duals[j] = 0.0;
    }
    let mut duals = y;
    for i in 0..m {
        if flipped[i] {
            duals[i] = -duals[i];
        }
    }
    let objective = p.cost.dot(&primal);
    Ok(SolveOutcome {
        status: SolveStatus::Optimal,
        primal,
        duals,
        bound_duals,
        objective,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunStatus {
    Optimal,
    Unbounded,
    IterLimit,
}

struct Tableau {
    a: DMatrix<f64>,
    h: DVector<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    pivots_since_refactor: usize,
    tol: f64,
}

impl Tableau {
    fn run(
        &mut self,
        cost: &DVector<f64>,
        allowed: &[bool],
        max_iter: usize,
        degenerate_limit: usize,
        iterations: &mut usize,
    ) -> RunStatus {
        let m = self.basis.len();
        let total = self.a.ncols();
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut in_basis = vec![false; total];
        for &b in &self.basis {
            in_basis[b] = true;
        }
        loop {
            if *iterations >= max_iter {
                return RunStatus::IterLimit;
            }
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&b| cost[b]));
            let y = self.binv.tr_mul(&cb);
            let cost_scale = 1.0 + cost.amax();
            let mut entering = None;
            let mut best = -self.tol * cost_scale;
            for j in 0..total {
                if in_basis[j] || !allowed[j] {
                    continue;
                }
                let d = cost[j] - self.a.column(j).dot(&y);
                if bland {
                    if d < -self.tol * cost_scale {
                        entering = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return RunStatus::Optimal;
            };
            let w = &self.binv * self.a.column(q);
            let mut leave = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_pivot = 0.0;
            for r in 0..m {
                if w[r] > self.tol {
                    let ratio = self.xb[r].max(0.0) / w[r];
                    let better = if ratio < best_ratio - 1e-12 {
                        true
                    } else if ratio <= best_ratio + 1e-12 {
                        if bland {
                            leave.is_some_and(|l: usize| self.basis[r] < self.basis[l])
                        } else {
                            w[r] > best_pivot
                        }
                    } else {
                        false
                    };
                    if better || leave.is_none() {
                        best_ratio = ratio;
                        best_pivot = w[r];
                        leave = Some(r);
                    }
                }
            }
            let Some(r) = leave else {
                return RunStatus::Unbounded;
            };
            if best_ratio <= self.tol {
                degenerate += 1;
                if degenerate > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            in_basis[self.basis[r]] = false;
            in_basis[q] = true;
            self.pivot_with(r, q, &w);
            *iterations += 1;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = &self.binv * self.a.column(q);
        self.pivot_with(r, q, &w);
    }

    fn pivot_with(&mut self, r: usize, q: usize, w: &DVector<f64>) {
        let m = self.basis.len();
        let piv = w[r];
        let theta = self.xb[r] / piv;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * w[i];
            }
        }
        self.xb[r] = theta;
        let pivot_row = self.binv.row(r) / piv;
        for i in 0..m {
            if i != r && w[i] != 0.0 {
                let f = w[i];
                for c in 0..m {
                    self.binv[(i, c)] -= f * pivot_row[c];
                }
            }
        }
        self.binv.set_row(r, &pivot_row);
        self.basis[r] = q;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= 64 {
            self.refactor();
        }
    }

    fn refactor(&mut self) {
        let m = self.basis.len();
        let mut b = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            b.set_column(k, &self.a.column(j));
        }
        if let Some(inv) = b.try_inverse() {
            self.binv = inv;
            self.xb = &self.binv * &self.h;
        }
        self.pivots_since_refactor = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(cost: &[f64], rows: usize, a: &[f64], h: &[f64]) -> LpProblem {
        LpProblem::new(
            DVector::from_column_slice(cost),
            DMatrix::from_row_slice(rows, cost.len(), a),
            DVector::from_column_slice(h),
        )
    }

    #[test]
    fn min_x_nonneg() {
        let p = LpProblem::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        );
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(out.objective.abs() < 1e-12);
    }

    #[test]
    fn upper_bounded_row_dual() {
        // min -x  s.t.  x + s = 1. The row multiplier is d(obj)/d(rhs) = -1;
        // the nonnegative multiplier of the original `x ≤ 1` row is its negation, 1.
        let out = solve_lp(&lp(&[-1.0, 0.0], 1, &[1.0, 1.0], &[1.0])).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 1.0).abs() < 1e-12);
        assert!((out.duals[0] + 1.0).abs() < 1e-12);
        assert!((-out.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_negative_bound() {
        // x + s = -1 with x, s ≥ 0.
        let out = solve_lp(&lp(&[0.0, 0.0], 1, &[1.0, 1.0], &[-1.0])).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let out = solve_lp(&lp(&[-1.0, 0.0], 1, &[1.0, -1.0], &[1.0])).unwrap();
        assert_eq!(out.status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_redundant_row() {
        // min y  s.t.  y - x = -2, 2y - 2x = -4, x + s = 3 ; y free.
        let p = lp(
            &[0.0, 1.0, 0.0],
            3,
            &[-1.0, 1.0, 0.0, -2.0, 2.0, 0.0, 1.0, 0.0, 1.0],
            &[-2.0, -4.0, 3.0],
        )
        .with_free(vec![false, true, false]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 2.0).abs() < 1e-10, "{}", out.objective);
        assert!((out.primal[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling LP in equality form.
        let p = lp(
            &[-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0],
            3,
            &[
                0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0, //
                0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            ],
            &[0.0, 0.0, 1.0],
        );
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 0.05).abs() < 1e-9, "{}", out.objective);
    }
}
