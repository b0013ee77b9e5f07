//! First-order solver for small dense semidefinite programs.
//!
//! Problems have bounded scalar variables and symmetric matrix blocks, each
//! constrained to the PSD cone, the entrywise nonnegative cone, or left
//! free, coupled by linear equality rows:
//!
//! ```text
//! minimize   Σ cost_s·v_s + Σ ⟨C_k, X_k⟩
//! subject to Σ a_rs·v_s + Σ ⟨A_rk, X_k⟩ = rhs_r
//!            lower_s ≤ v_s ≤ upper_s,  X_k ∈ cone_k
//! ```
//!
//! The solver alternates an exact projection onto the affine set (through
//! a cached Cholesky factor of the row Gram matrix) with a projection onto
//! the cone product, with over-relaxation and residual-balanced penalty.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cone {
    Psd,
    Nonneg,
    Free,
}

/// A term of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// `coeff · v_index`.
    Scalar(usize, f64),
    /// `coeff · X_block[i, j]`, counting the entry once even when `i ≠ j`.
    Entry {
        block: usize,
        i: usize,
        j: usize,
        coeff: f64,
    },
}

/// Terms expressing `⟨m, X_block⟩` for a symmetric `m`.
pub fn matrix_terms(block: usize, m: &DMatrix<f64>) -> Vec<Term> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..=j {
            let coeff = if i == j { m[(i, i)] } else { m[(i, j)] + m[(j, i)] };
            if coeff != 0.0 {
                out.push(Term::Entry { block, i, j, coeff });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct ScalarVar {
    lower: f64,
    upper: f64,
    cost: f64,
}

#[derive(Debug, Clone)]
struct BlockVar {
    dim: usize,
    cone: Cone,
    cost: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<Term>,
    rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    scalars: Vec<ScalarVar>,
    blocks: Vec<BlockVar>,
    rows: Vec<Row>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.scalars.push(ScalarVar { lower, upper, cost });
        self.scalars.len() - 1
    }

    pub fn add_block(&mut self, dim: usize, cone: Cone) -> usize {
        self.blocks.push(BlockVar {
            dim,
            cone,
            cost: None,
        });
        self.blocks.len() - 1
    }

    /// Adds a matrix constrained to be both PSD and entrywise nonnegative,
    /// represented by a PSD block and a nonnegative block tied together by
    /// equality rows. Returns `(psd_block, nonneg_block)`; constraints and
    /// costs should refer to the PSD block.
    pub fn add_doubly_nonneg_block(&mut self, dim: usize) -> (usize, usize) {
        let p = self.add_block(dim, Cone::Psd);
        let q = self.add_block(dim, Cone::Nonneg);
        for j in 0..dim {
            for i in 0..=j {
                self.add_row(
                    vec![
                        Term::Entry {
                            block: p,
                            i,
                            j,
                            coeff: 1.0,
                        },
                        Term::Entry {
                            block: q,
                            i,
                            j,
                            coeff: -1.0,
                        },
                    ],
                    0.0,
                );
            }
        }
        (p, q)
    }

    pub fn set_block_cost(&mut self, block: usize, cost: DMatrix<f64>) {
        self.blocks[block].cost = Some(cost);
    }

    pub fn set_scalar_cost(&mut self, scalar: usize, cost: f64) {
        self.scalars[scalar].cost = cost;
    }

    pub fn add_row(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.rows.push(Row { terms, rhs });
        self.rows.len() - 1
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    fn validate(&self) -> Result<()> {
        for (k, s) in self.scalars.iter().enumerate() {
            if s.lower.is_nan() || s.upper.is_nan() || s.lower > s.upper || !s.cost.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "scalar {k} has inconsistent bounds or cost"
                )));
            }
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if let Some(c) = &b.cost {
                if c.nrows() != b.dim || c.ncols() != b.dim {
                    return Err(Error::Dimension(format!("cost of block {k} has wrong size")));
                }
                crate::numerics::check_symmetric(c)?;
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::BadRow {
                    row: r,
                    reason: "non-finite right-hand side".into(),
                });
            }
            for t in &row.terms {
                let ok = match *t {
                    Term::Scalar(s, c) => s < self.scalars.len() && c.is_finite(),
                    Term::Entry { block, i, j, coeff } => {
                        block < self.blocks.len()
                            && i < self.blocks[block].dim
                            && j < self.blocks[block].dim
                            && coeff.is_finite()
                    }
                };
                if !ok {
                    return Err(Error::BadRow {
                        row: r,
                        reason: "term refers to a missing variable or is not finite".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    pub scalars: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// One multiplier per row with `d(objective)/d(rhs_r) = duals[r]`.
    pub duals: DVector<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Max row violation, in the units of the original rows.
    pub primal_residual: f64,
    /// Max violation of dual stationarity.
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Normalized residual of the infeasibility certificate, when one was found.
    pub certificate_residual: Option<f64>,
    pub log: Vec<IterationRecord>,
}

impl SdpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Record an [`IterationRecord`] at every residual check.
    pub record_log: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tol: 1e-6,
            max_iter: 100_000,
            record_log: false,
        }
    }
}

pub fn solve_sdp(p: &SdpProblem) -> Result<SdpOutcome> {
    solve_sdp_with(p, &SdpSettings::default())
}

/// Multipliers of the given rows of an optimal outcome.
pub fn extract_equality_duals(outcome: &SdpOutcome, rows: &[usize]) -> Result<DVector<f64>> {
    if !outcome.is_optimal() {
        return Err(Error::Solver(format!(
            "duals requested from a {:?} outcome",
            outcome.status
        )));
    }
    let mut out = DVector::zeros(rows.len());
    for (k, &r) in rows.iter().enumerate() {
        out[k] = *outcome.duals.get(r).ok_or_else(|| {
            Error::InvalidArgument(format!("row {r} does not exist"))
        })?;
    }
    Ok(out)
}

fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT_2;
                m[(j, i)] = x / SQRT_2;
            }
        }
    }
    m
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let d = m.nrows();
    for j in 0..d {
        for i in 0..=j {
            out[svec_index(i, j)] = if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)]) * SQRT_2
            };
        }
    }
}

/// Sparse rows in compressed form.
struct SparseRows {
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn mul(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for r in 0..self.start.len() - 1 {
            let mut s = 0.0;
            for k in self.start[r]..self.start[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            out[r] = s;
        }
    }

    fn tr_mul(&self, w: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for r in 0..self.start.len() - 1 {
            let wr = w[r];
            if wr == 0.0 {
                continue;
            }
            for k in self.start[r]..self.start[r + 1] {
                out[self.cols[k]] += self.vals[k] * wr;
            }
        }
    }
}

struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(p: &SdpProblem) -> Self {
        let mut offsets = Vec::with_capacity(p.blocks.len());
        let mut at = p.scalars.len();
        for b in &p.blocks {
            offsets.push(at);
            at += svec_len(b.dim);
        }
        Layout { offsets, total: at }
    }

    fn column(&self, t: &Term) -> (usize, f64) {
        match *t {
            Term::Scalar(s, c) => (s, c),
            Term::Entry { block, i, j, coeff } => {
                let col = self.offsets[block] + svec_index(i, j);
                let scale = if i == j { 1.0 } else { 1.0 / SQRT_2 };
                (col, coeff * scale)
            }
        }
    }
}

fn project_cone(p: &SdpProblem, layout: &Layout, z: &mut DVector<f64>) {
    for (k, s) in p.scalars.iter().enumerate() {
        z[k] = z[k].clamp(s.lower, s.upper);
    }
    for (b, blk) in p.blocks.iter().enumerate() {
        let off = layout.offsets[b];
        let len = svec_len(blk.dim);
        match blk.cone {
            Cone::Free => {}
            Cone::Nonneg => {
                for v in z.rows_mut(off, len).iter_mut() {
                    *v = v.max(0.0);
                }
            }
            Cone::Psd => {
                let m = smat(&z.as_slice()[off..off + len], blk.dim);
                let eig = SymmetricEigen::new(m);
                if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
                    continue;
                }
                let mut out = DMatrix::zeros(blk.dim, blk.dim);
                for (k, &l) in eig.eigenvalues.iter().enumerate() {
                    if l > 0.0 {
                        let v = eig.eigenvectors.column(k);
                        out.ger(l, &v, &v, 1.0);
                    }
                }
                svec_into(&out, &mut z.as_mut_slice()[off..off + len]);
            }
        }
    }
}

/// Distance of a dual slack from the dual cone, per block, in ∞-norm.
fn dual_cone_violation(p: &SdpProblem, layout: &Layout, s: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, sv) in p.scalars.iter().enumerate() {
        if sv.lower == f64::NEG_INFINITY && s[k] > 0.0 {
            worst = worst.max(s[k]);
        }
        if sv.upper == f64::INFINITY && s[k] < 0.0 {
            worst = worst.max(-s[k]);
        }
    }
    for (b, blk) in p.blocks.iter().enumerate() {
        let off = layout.offsets[b];
        let len = svec_len(blk.dim);
        let part = &s.as_slice()[off..off + len];
        match blk.cone {
            Cone::Free => {
                worst = worst.max(part.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
            }
            Cone::Nonneg => {
                worst = worst.max(part.iter().fold(0.0, |a: f64, v| a.max(-v)));
            }
            Cone::Psd => {
                let lam = SymmetricEigen::new(smat(part, blk.dim)).eigenvalues.min();
                worst = worst.max(-lam);
            }
        }
    }
    worst
}

/// `inf { sᵀv : lower ≤ v ≤ upper }` over the finite sides of the scalar boxes.
fn box_support(p: &SdpProblem, s: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (k, sv) in p.scalars.iter().enumerate() {
        if s[k] > 0.0 && sv.lower.is_finite() {
            total += sv.lower * s[k];
        } else if s[k] < 0.0 && sv.upper.is_finite() {
            total += sv.upper * s[k];
        }
    }
    total
}

const RHO_INTERVAL: usize = 200;

pub fn solve_sdp_with(p: &SdpProblem, settings: &SdpSettings) -> Result<SdpOutcome> {
    p.validate()?;
    let layout = Layout::new(p);
    let nv = layout.total;

    let mut cost = DVector::zeros(nv);
    for (k, s) in p.scalars.iter().enumerate() {
        cost[k] = s.cost;
    }
    for (b, blk) in p.blocks.iter().enumerate() {
        if let Some(c) = &blk.cost {
            let off = layout.offsets[b];
            svec_into(c, &mut cost.as_mut_slice()[off..off + svec_len(blk.dim)]);
        }
    }

    // Assemble rows with merged duplicate columns, scaled to unit norm.
    let mut kept: Vec<usize> = Vec::new();
    let mut row_scale: Vec<f64> = Vec::new();
    let mut start = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut rhs_scaled = Vec::new();
    let mut dense_row = vec![0.0; nv];
    let mut touched: Vec<usize> = Vec::new();
    for (r, row) in p.rows.iter().enumerate() {
        for t in &row.terms {
            let (c, v) = layout.column(t);
            if dense_row[c] == 0.0 {
                touched.push(c);
            }
            dense_row[c] += v;
        }
        touched.sort_unstable();
        touched.dedup();
        let norm = touched.iter().map(|&c| dense_row[c] * dense_row[c]).sum::<f64>().sqrt();
        if norm <= 1e-14 {
            for &c in &touched {
                dense_row[c] = 0.0;
            }
            touched.clear();
            if row.rhs.abs() > 1e-12 {
                return Ok(infeasible_outcome(p, 0, Some(0.0)));
            }
            continue;
        }
        for &c in &touched {
            if dense_row[c] != 0.0 {
                cols.push(c);
                vals.push(dense_row[c] / norm);
            }
            dense_row[c] = 0.0;
        }
        touched.clear();
        start.push(cols.len());
        rhs_scaled.push(row.rhs / norm);
        row_scale.push(norm);
        kept.push(r);
    }
    let mut a = SparseRows { start, cols, vals };

    // Gram matrix A·Aᵀ via column scatter.
    let nr = kept.len();
    let gram = {
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for r in 0..nr {
            for k in a.start[r]..a.start[r + 1] {
                by_col[a.cols[k]].push((r, a.vals[k]));
            }
        }
        let mut g = DMatrix::zeros(nr, nr);
        for entries in &by_col {
            for (x, &(ri, vi)) in entries.iter().enumerate() {
                for &(rj, vj) in &entries[x..] {
                    g[(ri, rj)] += vi * vj;
                }
            }
        }
        for i in 0..nr {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    };

    // Drop linearly dependent rows (greedy pivoted elimination in row order).
    let independent = independent_rows(&gram);
    let (a_ind, rhs_ind, scale_ind, kept_ind, chol) = if independent.len() == nr {
        let chol = nalgebra::Cholesky::new(gram)
            .ok_or_else(|| Error::Solver("row Gram matrix is not positive definite".into()))?;
        (a, DVector::from_vec(rhs_scaled), row_scale, kept, chol)
    } else {
        let mut start = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &r in &independent {
            for k in a.start[r]..a.start[r + 1] {
                cols.push(a.cols[k]);
                vals.push(a.vals[k]);
            }
            start.push(cols.len());
        }
        let sub = DMatrix::from_fn(independent.len(), independent.len(), |i, j| {
            gram[(independent[i], independent[j])]
        });
        let chol = nalgebra::Cholesky::new(sub)
            .ok_or_else(|| Error::Solver("row Gram matrix is not positive definite".into()))?;
        a = SparseRows { start, cols, vals };
        (
            a,
            DVector::from_iterator(independent.len(), independent.iter().map(|&r| rhs_scaled[r])),
            independent.iter().map(|&r| row_scale[r]).collect(),
            independent.iter().map(|&r| kept[r]).collect::<Vec<_>>(),
            chol,
        )
    };
    let nr = kept_ind.len();
    let b = rhs_ind;

    let b_norm = p.rows.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs()));
    let c_norm = cost.amax();
    let tol = settings.tol;
    let alpha = 1.6;
    let mut rho = 1.0;

    let mut x = DVector::zeros(nv);
    let mut u = DVector::zeros(nv);
    let mut v: DVector<f64> = DVector::zeros(nv);
    let mut av = DVector::zeros(nr);
    let mut atw = DVector::zeros(nv);
    let mut w = DVector::zeros(nr);
    let mut lambda = DVector::zeros(nr);
    let mut lambda_prev = DVector::zeros(nr);
    let mut certificate_hits = 0;
    let mut log = Vec::new();

    let mut iter = 0;
    let mut status = SdpStatus::IterLimit;
    let mut certificate_residual = None;
    let mut res = Residuals::default();
    while iter < settings.max_iter {
        iter += 1;
        // Affine step.
        v.copy_from(&x);
        v -= &u;
        v.axpy(-1.0 / rho, &cost, 1.0);
        a_ind.mul(&v, &mut av);
        av -= &b;
        w.copy_from(&av);
        chol.solve_mut(&mut w);
        a_ind.tr_mul(&w, &mut atw);
        v -= &atw;
        // v now holds the affine iterate; relax and project.
        v *= alpha;
        v.axpy(1.0 - alpha, &x, 1.0);
        u += &v;
        x.copy_from(&u);
        project_cone(p, &layout, &mut x);
        u -= &x;
        lambda.copy_from(&w);
        lambda *= -rho;

        if iter % 10 == 0 || iter == settings.max_iter {
            res = residuals(p, &layout, &a_ind, &b, &scale_ind, &cost, &x, &u, &lambda, rho);
            if settings.record_log {
                log.push(IterationRecord {
                    iteration: iter,
                    primal_residual: res.primal,
                    dual_residual: res.dual,
                    objective: res.pobj,
                });
            }
            let gap_ok = res.gap <= tol * (1.0 + res.pobj.abs() + res.dobj.abs());
            if res.primal <= tol * (1.0 + b_norm) && res.dual <= tol * (1.0 + c_norm) && gap_ok {
                status = SdpStatus::Optimal;
                break;
            }
        }
        if iter % 50 == 0 {
            let rp = res.primal / (1.0 + b_norm);
            let rd = res.dual / (1.0 + c_norm);
            if iter % RHO_INTERVAL == 0 && rp > 0.0 && rd > 0.0 {
                let ratio = (rp / rd).sqrt().clamp(0.2, 5.0);
                if (ratio > 2.0 || ratio < 0.5) && (1e-6..=1e6).contains(&(rho * ratio)) {
                    rho *= ratio;
                    u /= ratio;
                }
            }
            if iter >= 500 && res.primal > 1e3 * tol * (1.0 + b_norm) {
                match infeasibility_certificate(p, &layout, &a_ind, &b, &lambda, &lambda_prev) {
                    Some(r) if r <= 1e-4 => {
                        certificate_hits += 1;
                        if certificate_hits >= 3 {
                            certificate_residual = Some(r);
                            status = SdpStatus::Infeasible;
                            break;
                        }
                    }
                    _ => certificate_hits = 0,
                }
            }
            lambda_prev.copy_from(&lambda);
        }
    }
    if status != SdpStatus::Optimal {
        res = residuals(p, &layout, &a_ind, &b, &scale_ind, &cost, &x, &u, &lambda, rho);
    }

    let mut duals = DVector::zeros(p.rows.len());
    for (k, &r) in kept_ind.iter().enumerate() {
        duals[r] = lambda[k] / scale_ind[k];
    }
    let scalars = x.rows(0, p.scalars.len()).iter().copied().collect();
    let blocks = p
        .blocks
        .iter()
        .enumerate()
        .map(|(bi, blk)| {
            let off = layout.offsets[bi];
            smat(&x.as_slice()[off..off + svec_len(blk.dim)], blk.dim)
        })
        .collect();
    Ok(SdpOutcome {
        status,
        scalars,
        blocks,
        duals,
        objective: res.pobj,
        dual_objective: res.dobj,
        primal_residual: res.primal,
        dual_residual: res.dual,
        gap: res.gap,
        iterations: iter,
        certificate_residual,
        log,
    })
}

fn infeasible_outcome(
    p: &SdpProblem,
    iterations: usize,
    certificate_residual: Option<f64>,
) -> SdpOutcome {
    SdpOutcome {
        status: SdpStatus::Infeasible,
        scalars: vec![0.0; p.scalars.len()],
        blocks: p.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        duals: DVector::zeros(p.rows.len()),
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations,
        certificate_residual,
        log: Vec::new(),
    }
}

/// Rows of a Gram matrix that are linearly independent of earlier rows.
fn independent_rows(gram: &DMatrix<f64>) -> Vec<usize> {
    let n = gram.nrows();
    // Incremental Cholesky: rows whose pivot vanishes are skipped.
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; keep.len()];
        for (a, &k) in keep.iter().enumerate() {
            let mut s = gram[(i, k)];
            for b in 0..a {
                s -= row[b] * l[(a, b)];
            }
            row[a] = s / l[(a, a)];
        }
        let d = gram[(i, i)] - row.iter().map(|v| v * v).sum::<f64>();
        if d > 1e-10 * gram[(i, i)].max(1e-300) {
            let a = keep.len();
            for (b, &v) in row.iter().enumerate() {
                l[(a, b)] = v;
            }
            l[(a, a)] = d.sqrt();
            keep.push(i);
        }
    }
    keep
}

#[derive(Debug, Clone, Copy, Default)]
struct Residuals {
    primal: f64,
    dual: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    p: &SdpProblem,
    layout: &Layout,
    a: &SparseRows,
    b: &DVector<f64>,
    scale: &[f64],
    cost: &DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
    rho: f64,
) -> Residuals {
    let nr = b.len();
    let mut ax = DVector::zeros(nr);
    a.mul(x, &mut ax);
    let mut primal: f64 = 0.0;
    for r in 0..nr {
        primal = primal.max(((ax[r] - b[r]) * scale[r]).abs());
    }
    let s = u * -rho;
    let mut atl = DVector::zeros(x.len());
    a.tr_mul(lambda, &mut atl);
    let dual = (cost - atl - &s).amax().max(dual_cone_violation(p, layout, &s));
    let pobj = cost.dot(x);
    let dobj = b.dot(lambda) + box_support(p, &s);
    Residuals {
        primal,
        dual,
        gap: (pobj - dobj).abs(),
        pobj,
        dobj,
    }
}

/// Checks whether the recent change in the row multipliers is a Farkas
/// direction: `y` with `Aᵀy` in the dual cone (boxes through their support
/// function) and `bᵀy < 0`. Returns the normalized cone violation.
fn infeasibility_certificate(
    p: &SdpProblem,
    layout: &Layout,
    a: &SparseRows,
    b: &DVector<f64>,
    lambda: &DVector<f64>,
    lambda_prev: &DVector<f64>,
) -> Option<f64> {
    let y = lambda_prev - lambda;
    let by = b.dot(&y);
    if !(by < 0.0) || y.amax() == 0.0 {
        return None;
    }
    let y = y / -by;
    let mut s = DVector::zeros(layout.total);
    a.tr_mul(&y, &mut s);
    let viol = dual_cone_violation(p, layout, &s);
    // bᵀy = −1 must stay below the infimum of sᵀv over the boxes.
    if box_support(p, &s) < -0.5 {
        return None;
    }
    Some(viol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_minimization() {
        // min ⟨I, X⟩ s.t. X₁₁ = 1, X ⪰ 0
        let mut p = SdpProblem::new();
        let x = p.add_block(2, Cone::Psd);
        p.set_block_cost(x, DMatrix::identity(2, 2));
        p.add_row(
            vec![Term::Entry {
                block: x,
                i: 0,
                j: 0,
                coeff: 1.0,
            }],
            1.0,
        );
        let out = solve_sdp(&p).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.objective - 1.0).abs() < 1e-5);
        assert!((out.blocks[0][(0, 0)] - 1.0).abs() < 1e-5);
        assert!(out.blocks[0][(1, 1)].abs() < 1e-5);
        // the row multiplier is d(objective)/d(rhs) = 1
        assert!((out.duals[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fixed_indefinite_matrix_is_infeasible() {
        let mut p = SdpProblem::new();
        let x = p.add_block(2, Cone::Psd);
        let target = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        for j in 0..2 {
            for i in 0..=j {
                p.add_row(
                    vec![Term::Entry {
                        block: x,
                        i,
                        j,
                        coeff: 1.0,
                    }],
                    target[(i, j)],
                );
            }
        }
        let out = solve_sdp(&p).unwrap();
        assert_eq!(out.status, SdpStatus::Infeasible);
        assert!(out.certificate_residual.unwrap() <= 1e-4);
    }

    #[test]
    fn lp_as_diagonal_sdp_matches_simplex_duals() {
        use crate::numerics::{solve_lp, LpProblem};
        // min x0 + 2x1 + 3x2 s.t. x0 + x1 + x2 = 2, x0 - x2 = 0.5
        let lp = LpProblem::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 0.0, -1.0]),
            DVector::from_vec(vec![2.0, 0.5]),
        );
        let lp_out = solve_lp(&lp).unwrap();
        let mut p = SdpProblem::new();
        let vars: Vec<usize> = (0..3)
            .map(|k| p.add_scalar(0.0, f64::INFINITY, lp.cost[k]))
            .collect();
        for r in 0..2 {
            let terms = (0..3)
                .filter(|&k| lp.eq_matrix[(r, k)] != 0.0)
                .map(|k| Term::Scalar(vars[k], lp.eq_matrix[(r, k)]))
                .collect();
            p.add_row(terms, lp.rhs[r]);
        }
        let out = solve_sdp(&p).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.objective - lp_out.objective).abs() < 1e-5);
        let duals = extract_equality_duals(&out, &[0, 1]).unwrap();
        assert!((&duals - &lp_out.duals).amax() < 1e-5, "{duals} vs {}", lp_out.duals);
    }

    #[test]
    fn dependent_rows_are_tolerated() {
        let mut p = SdpProblem::new();
        let v = p.add_scalar(0.0, f64::INFINITY, 1.0);
        p.add_row(vec![Term::Scalar(v, 1.0)], 2.0);
        p.add_row(vec![Term::Scalar(v, 2.0)], 4.0);
        let out = solve_sdp(&p).unwrap();
        assert_eq!(out.status, SdpStatus::Optimal);
        assert!((out.scalars[0] - 2.0).abs() < 1e-6);
    }
}
