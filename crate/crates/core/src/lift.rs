//! Lifted matrices of the completely positive reformulation and its
//! copositive dual.
//!
//! For an instance of dimension `n` every matrix here is `(n+1)×(n+1)`, with
//! index 0 reserved for the homogenizing coordinate: a point `x` lifts to
//! `Y = (1;x)(1;x)ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MbqpInstance;

/// All lifted matrices of an instance.
#[derive(Debug, Clone)]
pub struct Lifting {
    pub dim: usize,
    /// `[[0, cᵀ], [c, Q]]`.
    pub objective: DMatrix<f64>,
    /// `e₀e₀ᵀ`.
    pub homog: DMatrix<f64>,
    /// `T + Σ AA_i`.
    pub regularizer: DMatrix<f64>,
    /// `A_i = [[0, aᵢᵀ], [aᵢ, 0]]`.
    pub row_linear: Vec<DMatrix<f64>>,
    /// `AA_i = [[0, 0], [0, aᵢaᵢᵀ]]`.
    pub row_quad: Vec<DMatrix<f64>>,
    /// `KK_i = bᵢ²T − bᵢA_i + AA_i = (−bᵢ; aᵢ)(−bᵢ; aᵢ)ᵀ`.
    pub row_penalty: Vec<DMatrix<f64>>,
    /// `K_i = 2bᵢT − A_i`.
    pub row_linear_penalty: Vec<DMatrix<f64>>,
    /// One complementarity matrix per binary, in binary order.
    pub complementarity: Vec<DMatrix<f64>>,
    pub binaries: Vec<usize>,
    pub rhs: DVector<f64>,
}

impl Lifting {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// `Σ_i KK_i`.
    pub fn penalty_sum(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for k in &self.row_penalty {
            s += k;
        }
        s
    }

    /// Position of variable `j` in the binary list.
    pub fn binary_position(&self, j: usize) -> Option<usize> {
        self.binaries.iter().position(|&b| b == j)
    }
}

/// Complementarity matrix for variable `j`: entries `[0, j+1] = [j+1, 0] = −1`
/// and `[j+1, j+1] = 2`, so that `⟨N, (1;x)(1;x)ᵀ⟩ = 2x_j² − 2x_j`.
pub fn complementarity_matrix(dim: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(0, j + 1)] = -1.0;
    m[(j + 1, 0)] = -1.0;
    m[(j + 1, j + 1)] = 2.0;
    m
}

pub fn build_lifting(inst: &MbqpInstance) -> Lifting {
    let n = inst.num_vars();
    let dim = n + 1;
    let mut objective = DMatrix::zeros(dim, dim);
    for j in 0..n {
        objective[(0, j + 1)] = inst.linear[j];
        objective[(j + 1, 0)] = inst.linear[j];
    }
    objective.view_mut((1, 1), (n, n)).copy_from(&inst.quad);
    let mut homog = DMatrix::zeros(dim, dim);
    homog[(0, 0)] = 1.0;

    let mut row_linear = Vec::new();
    let mut row_quad = Vec::new();
    let mut row_penalty = Vec::new();
    let mut row_linear_penalty = Vec::new();
    let mut regularizer = homog.clone();
    for i in 0..inst.num_rows() {
        let a = inst.row(i);
        let bi = inst.rhs[i];
        let mut lin = DMatrix::zeros(dim, dim);
        for j in 0..n {
            lin[(0, j + 1)] = a[j];
            lin[(j + 1, 0)] = a[j];
        }
        let mut quad = DMatrix::zeros(dim, dim);
        quad.view_mut((1, 1), (n, n)).copy_from(&(&a * a.transpose()));
        let mut v = DVector::zeros(dim);
        v[0] = -bi;
        v.rows_mut(1, n).copy_from(&a);
        let pen = &v * v.transpose();
        let lin_pen = &homog * (2.0 * bi) - &lin;
        regularizer += &quad;
        row_linear.push(lin);
        row_quad.push(quad);
        row_penalty.push(pen);
        row_linear_penalty.push(lin_pen);
    }
    let complementarity = inst
        .binaries
        .iter()
        .map(|&j| complementarity_matrix(dim, j))
        .collect();
    Lifting {
        dim,
        objective,
        homog,
        regularizer,
        row_linear,
        row_quad,
        row_penalty,
        row_linear_penalty,
        complementarity,
        binaries: inst.binaries.clone(),
        rhs: inst.rhs.clone(),
    }
}

/// `(1;x)(1;x)ᵀ` for a nonnegative point.
pub fn rank_one_lift(x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if let Some(j) = x.iter().position(|&v| v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "lifted point must be nonnegative; entry {} is {}",
            j + 1,
            x[j]
        )));
    }
    let mut y = DVector::zeros(x.len() + 1);
    y[0] = 1.0;
    y.rows_mut(1, x.len()).copy_from(x);
    Ok(&y * y.transpose())
}

/// `yᵀMy`.
pub fn quad_form(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    if m.nrows() != y.len() || m.ncols() != y.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, vector has length {}",
            m.nrows(),
            m.ncols(),
            y.len()
        )));
    }
    Ok(y.dot(&(m * y)))
}

/// Frobenius inner product `⟨M, Y⟩`.
pub fn inner(m: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    m.component_mul(y).sum()
}

/// `G_j(f, g, r) = f·Σ KK_i − g·N_j + r·T` for the binary at position
/// `pos` of the binary list.
pub fn building_block_g(lift: &Lifting, pos: usize, f: f64, g: f64, r: f64) -> Result<DMatrix<f64>> {
    let nj = lift.complementarity.get(pos).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "binary position {pos} out of range (instance has {} binaries)",
            lift.binaries.len()
        ))
    })?;
    Ok(lift.penalty_sum() * f - nj * g + &lift.homog * r)
}

/// One McCormick inequality `⟨matrix, Y⟩ ≥ 0` over a pair of binaries.
#[derive(Debug, Clone)]
pub struct McCormickRow {
    pub first: usize,
    pub second: usize,
    pub kind: McCormickKind,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McCormickKind {
    /// `Y_{0,i} − Y_{ij} ≥ 0`.
    BelowFirst,
    /// `Y_{0,j} − Y_{ij} ≥ 0`.
    BelowSecond,
    /// `Y_{ij} − Y_{0,i} − Y_{0,j} + Y_{00} ≥ 0`.
    AboveSum,
    /// `Y_{ij} ≥ 0`.
    Nonnegative,
}

/// McCormick inequalities for every pair of binaries `i < j`, homogenized
/// with `Y_{00}` so their right-hand sides are zero.
pub fn mccormick_rows(lift: &Lifting) -> Vec<McCormickRow> {
    let dim = lift.dim;
    let mut rows = Vec::new();
    let put = |m: &mut DMatrix<f64>, a: usize, b: usize, c: f64| {
        if a == b {
            m[(a, a)] += c;
        } else {
            m[(a, b)] += 0.5 * c;
            m[(b, a)] += 0.5 * c;
        }
    };
    for (s, &i) in lift.binaries.iter().enumerate() {
        for &j in &lift.binaries[s + 1..] {
            let (pi, pj) = (i + 1, j + 1);
            let kinds = [
                McCormickKind::BelowFirst,
                McCormickKind::BelowSecond,
                McCormickKind::AboveSum,
                McCormickKind::Nonnegative,
            ];
            for kind in kinds {
                let mut m = DMatrix::zeros(dim, dim);
                match kind {
                    McCormickKind::BelowFirst => {
                        put(&mut m, 0, pi, 1.0);
                        put(&mut m, pi, pj, -1.0);
                    }
                    McCormickKind::BelowSecond => {
                        put(&mut m, 0, pj, 1.0);
                        put(&mut m, pi, pj, -1.0);
                    }
                    McCormickKind::AboveSum => {
                        put(&mut m, pi, pj, 1.0);
                        put(&mut m, 0, pi, -1.0);
                        put(&mut m, 0, pj, -1.0);
                        put(&mut m, 0, 0, 1.0);
                    }
                    McCormickKind::Nonnegative => put(&mut m, pi, pj, 1.0),
                }
                rows.push(McCormickRow {
                    first: i,
                    second: j,
                    kind,
                    matrix: m,
                });
            }
        }
    }
    rows
}
