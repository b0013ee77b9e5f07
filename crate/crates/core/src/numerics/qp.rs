use nalgebra::{DMatrix, DVector};

use super::eigen::sym_eigen_unchecked;
use super::{check_symmetric, SolveOutcome, SolveStatus};
use crate::config::Tolerances;
use crate::error::{Error, Result};

/// `minimize zᵀ·quad·z + 2·linearᵀz  s.t.  eq_matrix·z = rhs,  lower ≤ z ≤ upper`.
///
/// Bounds may be infinite. `quad` must be symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub quad: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Problem with `z ≥ 0` and no upper bounds.
    pub fn nonneg(
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        eq_matrix: DMatrix<f64>,
        rhs: DVector<f64>,
    ) -> Self {
        let n = linear.len();
        QpProblem {
            quad,
            linear,
            eq_matrix,
            rhs,
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.quad * z)) + 2.0 * self.linear.dot(z)
    }

    fn validate(&self) -> Result<()> {
        let n = self.linear.len();
        let m = self.rhs.len();
        if self.quad.nrows() != n || self.quad.ncols() != n {
            return Err(Error::Dimension(format!(
                "QP quadratic term is {}x{}, expected {n}x{n}",
                self.quad.nrows(),
                self.quad.ncols()
            )));
        }
        if self.eq_matrix.nrows() != m || self.eq_matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "QP constraint matrix is {}x{}, expected {m}x{n}",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("QP bound vectors have wrong length".into()));
        }
        if self.quad.iter().any(|v| !v.is_finite())
            || self.linear.iter().any(|v| !v.is_finite())
            || self.eq_matrix.iter().any(|v| !v.is_finite())
            || self.rhs.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("QP data must be finite".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::InvalidArgument(format!(
                    "QP bounds for variable {j} are inconsistent"
                )));
            }
        }
        check_symmetric(&self.quad)?;
        if n > 0 {
            let lam = sym_eigen_unchecked(&self.quad).values[0];
            if lam < -1e-7 * (1.0 + self.quad.amax()) {
                return Err(Error::NotPsd(lam));
            }
        }
        Ok(())
    }
}

pub fn solve_qp(p: &QpProblem) -> Result<SolveOutcome> {
    solve_qp_with(p, &Tolerances::default())
}

/// Operator-splitting QP solver with periodic active-set polishing.
///
/// The constraint set `[E; I]·z ∈ [h; lower] × [h; upper]` is handled by
/// ADMM. Once residuals are moderately small, the active set suggested by
/// the iterate is solved exactly and accepted if it satisfies the KKT
/// conditions, which yields solutions accurate to near machine precision.
pub fn solve_qp_with(p: &QpProblem, tol: &Tolerances) -> Result<SolveOutcome> {
    p.validate()?;
    let n = p.linear.len();
    let me = p.rhs.len();
    let pq = &p.quad * 2.0;
    let qq = &p.linear * 2.0;
    let eps = tol.qp_residual;

    if n == 0 {
        if p.rhs.amax() > eps {
            return Ok(SolveOutcome::failed(SolveStatus::Infeasible, 0, me, 0));
        }
        return Ok(SolveOutcome {
            status: SolveStatus::Optimal,
            primal: DVector::zeros(0),
            duals: DVector::zeros(me),
            bound_duals: DVector::zeros(0),
            objective: 0.0,
            iterations: 0,
        });
    }

    let mut solver = Admm::new(p, &pq, &qq);
    let polish_tol = 1e-9;
    let mut iterations = 0usize;
    let mut prev_y = solver.y.clone();
    let mut prev_x = solver.x.clone();
    let mut last_polish_res = f64::INFINITY;

    while iterations < tol.qp_max_iter {
        solver.step();
        iterations += 1;
        if iterations % 10 != 0 {
            continue;
        }
        let (rp, rd, ep, ed) = solver.residuals(eps, eps);
        let scaled = (rp / ep).max(rd / ed);
        if scaled < 1e3 && (scaled < 0.5 * last_polish_res || iterations % 200 == 0) {
            last_polish_res = scaled;
            if let Some(out) = polish(p, &pq, &qq, &solver, polish_tol, iterations) {
                return Ok(out);
            }
        }
        if rp <= ep && rd <= ed {
            if let Some(out) = polish(p, &pq, &qq, &solver, polish_tol, iterations) {
                return Ok(out);
            }
            return Ok(solver.outcome(p, iterations));
        }
        let dy = &solver.y - &prev_y;
        if solver.primal_infeasible(&dy, eps) {
            return Ok(SolveOutcome::failed(SolveStatus::Infeasible, n, me, iterations));
        }
        let dx = &solver.x - &prev_x;
        if solver.dual_infeasible(&dx, &pq, &qq, eps) {
            return Ok(SolveOutcome::failed(SolveStatus::Unbounded, n, me, iterations));
        }
        prev_y.copy_from(&solver.y);
        prev_x.copy_from(&solver.x);
        if iterations % 50 == 0 {
            solver.adapt_rho(&pq, &qq);
        }
    }
    if let Some(out) = polish(p, &pq, &qq, &solver, polish_tol, iterations) {
        return Ok(out);
    }
    Ok(SolveOutcome::failed(SolveStatus::IterLimit, n, me, iterations))
}

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const MAX_RHO_UPDATES: usize = 25;

struct Admm {
    a: DMatrix<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    rho: DVector<f64>,
    rho_base: f64,
    rho_updates: usize,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    pq: DMatrix<f64>,
    qq: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Admm {
    fn new(p: &QpProblem, pq: &DMatrix<f64>, qq: &DVector<f64>) -> Self {
        let n = p.linear.len();
        let me = p.rhs.len();
        let rows = me + n;
        let mut a = DMatrix::zeros(rows, n);
        a.rows_mut(0, me).copy_from(&p.eq_matrix);
        for j in 0..n {
            a[(me + j, j)] = 1.0;
        }
        let mut lo = DVector::zeros(rows);
        let mut hi = DVector::zeros(rows);
        lo.rows_mut(0, me).copy_from(&p.rhs);
        hi.rows_mut(0, me).copy_from(&p.rhs);
        lo.rows_mut(me, n).copy_from(&p.lower);
        hi.rows_mut(me, n).copy_from(&p.upper);
        let rho_base = 0.1;
        let rho = Self::rho_vector(&lo, &hi, rho_base);
        let chol = Self::factor(pq, &a, &rho);
        Admm {
            a,
            lo,
            hi,
            rho,
            rho_base,
            rho_updates: 0,
            x: DVector::zeros(n),
            z: DVector::zeros(rows),
            y: DVector::zeros(rows),
            pq: pq.clone(),
            qq: qq.clone(),
            chol,
        }
    }

    fn rho_vector(lo: &DVector<f64>, hi: &DVector<f64>, base: f64) -> DVector<f64> {
        DVector::from_iterator(
            lo.len(),
            lo.iter().zip(hi.iter()).map(|(&l, &u)| {
                if l == f64::NEG_INFINITY && u == f64::INFINITY {
                    RHO_MIN
                } else if (u - l).abs() < 1e-12 {
                    1e3 * base
                } else {
                    base
                }
            }),
        )
    }

    fn factor(
        pq: &DMatrix<f64>,
        a: &DMatrix<f64>,
        rho: &DVector<f64>,
    ) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        let n = pq.nrows();
        let mut k = pq + DMatrix::identity(n, n) * SIGMA;
        let mut scaled = a.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= rho[i];
        }
        k += a.transpose() * scaled;
        // K is positive definite by construction.
        nalgebra::Cholesky::new(k).expect("regularized KKT matrix is positive definite")
    }

    fn step(&mut self) {
        let w = self.rho.component_mul(&self.z) - &self.y;
        let rhs = &self.x * SIGMA - &self.qq + self.a.tr_mul(&w);
        let xt = self.chol.solve(&rhs);
        let zt = &self.a * &xt;
        self.x = &xt * ALPHA + &self.x * (1.0 - ALPHA);
        let zr = &zt * ALPHA + &self.z * (1.0 - ALPHA);
        let mut znew = zr.clone();
        for i in 0..znew.len() {
            let v = zr[i] + self.y[i] / self.rho[i];
            znew[i] = v.clamp(self.lo[i], self.hi[i]);
        }
        for i in 0..znew.len() {
            self.y[i] += self.rho[i] * (zr[i] - znew[i]);
        }
        self.z = znew;
    }

    fn residuals(&self, eps_abs: f64, eps_rel: f64) -> (f64, f64, f64, f64) {
        let ax = &self.a * &self.x;
        let rp = (&ax - &self.z).amax();
        let px = &self.pq * &self.x;
        let aty = self.a.tr_mul(&self.y);
        let rd = (&px + &self.qq + &aty).amax();
        let ep = eps_abs + eps_rel * ax.amax().max(self.z.amax());
        let ed = eps_abs + eps_rel * px.amax().max(aty.amax()).max(self.qq.amax());
        (rp, rd, ep, ed)
    }

    fn adapt_rho(&mut self, pq: &DMatrix<f64>, qq: &DVector<f64>) {
        let ax = &self.a * &self.x;
        let rp = (&ax - &self.z).amax();
        let px = pq * &self.x;
        let aty = self.a.tr_mul(&self.y);
        let rd = (&px + qq + &aty).amax();
        let np = ax.amax().max(self.z.amax()).max(1e-12);
        let nd = px.amax().max(aty.amax()).max(qq.amax()).max(1e-12);
        let ratio = ((rp / np) / (rd / nd).max(1e-30)).sqrt();
        if !ratio.is_finite() {
            return;
        }
        let new_base = (self.rho_base * ratio).clamp(RHO_MIN, RHO_MAX);
        // Bounded number of updates: on badly scaled problems the ratio can
        // flip back and forth and the refactorizations prevent progress.
        if self.rho_updates < MAX_RHO_UPDATES && (new_base > 5.0 * self.rho_base || new_base < 0.2 * self.rho_base) {
            self.rho_updates += 1;
            self.rho_base = new_base;
            self.rho = Self::rho_vector(&self.lo, &self.hi, new_base);
            self.chol = Self::factor(pq, &self.a, &self.rho);
        }
    }

    fn primal_infeasible(&self, dy: &DVector<f64>, eps: f64) -> bool {
        let norm = dy.amax();
        if norm < 1e-12 {
            return false;
        }
        if self.a.tr_mul(dy).amax() > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let d = dy[i];
            if d > 0.0 {
                if self.hi[i].is_infinite() {
                    if d > eps * norm {
                        return false;
                    }
                    continue;
                }
                support += self.hi[i] * d;
            } else if d < 0.0 {
                if self.lo[i].is_infinite() {
                    if -d > eps * norm {
                        return false;
                    }
                    continue;
                }
                support += self.lo[i] * d;
            }
        }
        support < -eps * norm
    }

    fn dual_infeasible(
        &self,
        dx: &DVector<f64>,
        pq: &DMatrix<f64>,
        qq: &DVector<f64>,
        eps: f64,
    ) -> bool {
        let norm = dx.amax();
        if norm < 1e-12 {
            return false;
        }
        if (pq * dx).amax() > eps * norm || qq.dot(dx) >= -eps * norm {
            return false;
        }
        let adx = &self.a * dx;
        for i in 0..adx.len() {
            let v = adx[i];
            let lo_ok = self.lo[i].is_infinite() || v >= -eps * norm;
            let hi_ok = self.hi[i].is_infinite() || v <= eps * norm;
            if !(lo_ok && hi_ok) {
                return false;
            }
        }
        true
    }

    fn outcome(&self, p: &QpProblem, iterations: usize) -> SolveOutcome {
        let me = p.rhs.len();
        let n = p.linear.len();
        let duals = -self.y.rows(0, me).into_owned();
        let bound_duals = -self.y.rows(me, n).into_owned();
        SolveOutcome {
            status: SolveStatus::Optimal,
            objective: p.objective(&self.x),
            primal: self.x.clone(),
            duals,
            bound_duals,
            iterations,
        }
    }
}

/// Solves the equality-constrained problem obtained by fixing the bounds
/// the ADMM iterate marks as active, then checks all KKT conditions.
fn polish(
    p: &QpProblem,
    pq: &DMatrix<f64>,
    qq: &DVector<f64>,
    s: &Admm,
    kkt_tol: f64,
    iterations: usize,
) -> Option<SolveOutcome> {
    let n = p.linear.len();
    let me = p.rhs.len();
    // Active set from the multipliers first, then from the projected iterate
    // alone, which is the better guess when the duals have not settled.
    let mut by_dual = vec![None; n];
    let mut by_clamp = vec![None; n];
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        let yj = s.y[me + j];
        let zj = s.z[me + j];
        if l == u {
            by_dual[j] = Some(l);
            by_clamp[j] = Some(l);
            continue;
        }
        if l.is_finite() && zj - l < -yj {
            by_dual[j] = Some(l);
        } else if u.is_finite() && u - zj < yj {
            by_dual[j] = Some(u);
        }
        if zj <= l {
            by_clamp[j] = Some(l);
        } else if zj >= u {
            by_clamp[j] = Some(u);
        }
    }
    polish_active(p, pq, qq, &by_dual, kkt_tol, iterations)
        .or_else(|| (by_clamp != by_dual).then(|| polish_active(p, pq, qq, &by_clamp, kkt_tol, iterations)).flatten())
}

fn polish_active(
    p: &QpProblem,
    pq: &DMatrix<f64>,
    qq: &DVector<f64>,
    fixed: &[Option<f64>],
    kkt_tol: f64,
    iterations: usize,
) -> Option<SolveOutcome> {
    let n = p.linear.len();
    let me = p.rhs.len();
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let nf = free.len();
    let mut x = DVector::zeros(n);
    for j in 0..n {
        if let Some(v) = fixed[j] {
            x[j] = v;
        }
    }
    let dim = nf + me;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let grad_fixed = pq * &x + qq;
    let ex_fixed = &p.eq_matrix * &x;
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = pq[(i, j)];
        }
        for r in 0..me {
            kkt[(a, nf + r)] = p.eq_matrix[(r, i)];
            kkt[(nf + r, a)] = p.eq_matrix[(r, i)];
        }
        rhs[a] = -grad_fixed[i];
    }
    for r in 0..me {
        rhs[nf + r] = p.rhs[r] - ex_fixed[r];
    }
    let sol = if dim == 0 {
        DVector::zeros(0)
    } else {
        let svd = kkt.clone().svd(true, true);
        let cut = 1e-11 * svd.singular_values.max().max(1.0);
        let sol = svd.solve(&rhs, cut).ok()?;
        // One step of iterative refinement.
        let res = &rhs - &kkt * &sol;
        sol + svd.solve(&res, cut).ok()?
    };
    for (a, &i) in free.iter().enumerate() {
        x[i] = sol[a];
    }
    // Stationarity: grad = Eᵀλ + μ, with λ = -ν.
    let lambda = -sol.rows(nf, me).into_owned();
    let grad = pq * &x + qq;
    let mu = &grad - p.eq_matrix.tr_mul(&lambda);

    let scale = 1.0 + grad.amax().max(qq.amax());
    let hscale = 1.0 + p.rhs.amax() + x.amax();
    if (&p.eq_matrix * &x - &p.rhs).amax() > kkt_tol * hscale {
        return None;
    }
    for j in 0..n {
        let slack_tol = kkt_tol * (1.0 + x[j].abs());
        if x[j] < p.lower[j] - slack_tol || x[j] > p.upper[j] + slack_tol {
            return None;
        }
    }
    let duals_ok = (0..n).all(|j| match fixed[j] {
        None => mu[j].abs() <= kkt_tol * scale,
        Some(_) if p.lower[j] == p.upper[j] => true,
        Some(v) if v == p.lower[j] => mu[j] >= -kkt_tol * scale,
        Some(_) => mu[j] <= kkt_tol * scale,
    });
    let (lambda, mu) = if duals_ok {
        (lambda, mu)
    } else {
        // With degenerate rows the least-norm λ can put the wrong sign on a
        // bound multiplier although valid multipliers exist.
        repair_multipliers(p, fixed, &grad)?
    };
    let mut bound_duals = mu;
    for j in 0..n {
        if fixed[j].is_none() {
            bound_duals[j] = 0.0;
        }
    }
    Some(SolveOutcome {
        status: SolveStatus::Optimal,
        objective: p.objective(&x),
        primal: x,
        duals: lambda,
        bound_duals,
        iterations,
    })
}

/// Multipliers for a fixed primal point: `Eᵀλ + μ = ∇f` with `μ` zero on
/// free variables, `≥ 0` at lower and `≤ 0` at upper bounds. Found as a
/// feasibility LP; `None` when there are none.
fn repair_multipliers(
    p: &QpProblem,
    fixed: &[Option<f64>],
    grad: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.linear.len();
    let me = p.rhs.len();
    // Columns: λ (free), then one bound multiplier per fixed variable.
    let fixed_cols: Vec<usize> = (0..n).filter(|&j| fixed[j].is_some()).collect();
    let cols = me + fixed_cols.len();
    let mut a = DMatrix::zeros(n, cols);
    a.columns_mut(0, me).copy_from(&p.eq_matrix.transpose());
    let mut free = vec![true; me];
    for (k, &j) in fixed_cols.iter().enumerate() {
        let v = fixed[j].unwrap_or(p.lower[j]);
        let (sign, is_free) = if p.lower[j] == p.upper[j] {
            (1.0, true)
        } else if v == p.lower[j] {
            (1.0, false)
        } else {
            (-1.0, false)
        };
        a[(j, me + k)] = sign;
        free.push(is_free);
    }
    let lp = super::LpProblem::new(DVector::zeros(cols), a, grad.clone()).with_free(free);
    let out = super::solve_lp(&lp).ok()?;
    if out.status != SolveStatus::Optimal {
        return None;
    }
    let lambda = out.primal.rows(0, me).into_owned();
    let mut mu = DVector::zeros(n);
    for (k, &j) in fixed_cols.iter().enumerate() {
        let sign = if p.lower[j] != p.upper[j] && fixed[j] != Some(p.lower[j]) { -1.0 } else { 1.0 };
        mu[j] = sign * out.primal[me + k];
    }
    let scale = 1.0 + grad.amax();
    if (grad - p.eq_matrix.tr_mul(&lambda) - &mu).amax() > 1e-9 * scale {
        return None;
    }
    Some((lambda, mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        // min x² - 2x  → x = 1, value -1.
        let p = QpProblem {
            quad: DMatrix::from_element(1, 1, 1.0),
            linear: DVector::from_element(1, -1.0),
            eq_matrix: DMatrix::zeros(0, 1),
            rhs: DVector::zeros(0),
            lower: DVector::from_element(1, f64::NEG_INFINITY),
            upper: DVector::from_element(1, f64::INFINITY),
        };
        let out = solve_qp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.primal[0] - 1.0).abs() < 1e-9);
        assert!((out.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bound_active_with_dual() {
        // min x² + 2x, x ≥ 0 → x = 0, bound dual = 2.
        let p = QpProblem::nonneg(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        );
        let out = solve_qp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(out.primal[0].abs() < 1e-9);
        assert!((out.bound_duals[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn equality_dual_is_rhs_derivative() {
        // min x² + y²  s.t. x + y = h; value h²/2, derivative h.
        let p = QpProblem::nonneg(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 3.0),
        );
        let out = solve_qp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective - 4.5).abs() < 1e-9);
        assert!((out.duals[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn detects_infeasible() {
        let p = QpProblem::nonneg(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, -1.0),
        );
        assert_eq!(solve_qp(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let p = QpProblem::nonneg(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![-1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_element(1, 0.0),
        );
        assert_eq!(solve_qp(&p).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn rejects_indefinite() {
        let p = QpProblem::nonneg(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(matches!(solve_qp(&p), Err(Error::NotPsd(_))));
    }
    #[test]
    fn degenerate_row_gets_signed_multipliers() {
        // min −2x − s, x + s = 1, 0 ≤ x ≤ 1, s ≥ 0 → x = 1, s = 0. Both
        // variables sit at bounds, so λ is fixed only by the sign conditions.
        let p = QpProblem {
            quad: DMatrix::zeros(2, 2),
            linear: DVector::from_vec(vec![-1.0, -0.5]),
            eq_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            rhs: DVector::from_element(1, 1.0),
            lower: DVector::zeros(2),
            upper: DVector::from_vec(vec![1.0, f64::INFINITY]),
        };
        let out = solve_qp(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.primal.as_slice(), &[1.0, 0.0]);
        assert!(out.bound_duals[0] <= 0.0 && out.bound_duals[1] >= 0.0);
        let grad = &p.linear * 2.0;
        let residual = grad - p.eq_matrix.tr_mul(&out.duals) - &out.bound_duals;
        assert!(residual.amax() < 1e-12);
    }
}
