//! Mixed binary quadratic programs in standard form.
//!
//! An instance is `min xᵀQx + 2cᵀx  s.t.  Ax = b, x ≥ 0, x_j ∈ {0,1} for j in
//! the binary set`, where every binary carries an explicit complement row
//! `x_j + w_j = 1`. Indices are 0-based in memory and 1-based in files.

mod generate;
mod graph;
pub(crate) mod io;

pub use generate::{generate_comb, generate_sslp, generate_ssqp};
pub use graph::{reduce_edge_coloring, Graph};
pub use io::{read_graph, read_instance, write_graph, write_instance, GraphFile, InstanceFile};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::check_symmetric;

/// Relation of a raw constraint row to its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl RawConstraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        RawConstraint {
            coeffs,
            relation,
            rhs,
        }
    }
}

/// User-level problem before slacks are added. All variables are
/// nonnegative; the objective is `xᵀ·quad·x + 2·linearᵀx`.
#[derive(Debug, Clone)]
pub struct RawProblem {
    pub quad: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: Vec<RawConstraint>,
    pub binaries: Vec<usize>,
}

impl RawProblem {
    /// Linear objective `2·linearᵀx` with no quadratic term.
    pub fn linear(linear: Vec<f64>, constraints: Vec<RawConstraint>, binaries: Vec<usize>) -> Self {
        let n = linear.len();
        RawProblem {
            quad: DMatrix::zeros(n, n),
            linear: DVector::from_vec(linear),
            constraints,
            binaries,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.linear.len();
        if self.quad.nrows() != n || self.quad.ncols() != n {
            return Err(Error::Dimension(format!(
                "objective matrix is {}x{}, expected {n}x{n}",
                self.quad.nrows(),
                self.quad.ncols()
            )));
        }
        check_symmetric(&self.quad)?;
        for (row, con) in self.constraints.iter().enumerate() {
            if con.coeffs.len() != n {
                return Err(Error::BadRow {
                    row,
                    reason: format!("has {} coefficients, expected {n}", con.coeffs.len()),
                });
            }
            if !con.rhs.is_finite() || con.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::BadRow {
                    row,
                    reason: "contains a non-finite value".into(),
                });
            }
        }
        check_binaries(&self.binaries, n)
    }
}

fn check_binaries(binaries: &[usize], n: usize) -> Result<()> {
    for (k, &j) in binaries.iter().enumerate() {
        if j >= n {
            return Err(Error::InvalidArgument(format!(
                "binary index {} out of range 1..={n}",
                j + 1
            )));
        }
        if k > 0 && binaries[k - 1] >= j {
            return Err(Error::InvalidArgument(
                "binary indices must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Complement slack `w` for a binary variable: row `x_binary + w = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplementSlack {
    pub binary: usize,
    pub column: usize,
    pub row: usize,
}

/// Slack turning raw inequality `constraint` into an equality; `sign` is
/// `+1` for `≤` rows and `-1` for `≥` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalitySlack {
    pub constraint: usize,
    pub column: usize,
    pub row: usize,
    pub sign: f64,
}

/// Bookkeeping linking standard-form columns and rows to the raw problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlackMap {
    /// Number of columns that came from the raw problem.
    pub original_vars: usize,
    pub complements: Vec<ComplementSlack>,
    pub inequalities: Vec<InequalitySlack>,
    /// Standard-form row of each raw constraint, in raw order.
    pub constraint_rows: Vec<usize>,
}

impl SlackMap {
    pub fn is_empty(&self) -> bool {
        self.complements.is_empty() && self.inequalities.is_empty()
    }
}

/// How a generated instance was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Standard-form mixed binary quadratic program.
#[derive(Debug, Clone)]
pub struct MbqpInstance {
    pub quad: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub binaries: Vec<usize>,
    pub slack_map: SlackMap,
    pub seed_info: Option<SeedInfo>,
}

impl MbqpInstance {
    /// Builds an instance from standard-form data, checking dimensions,
    /// symmetry and that every binary has a complement row.
    pub fn new(
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        constraints: DMatrix<f64>,
        rhs: DVector<f64>,
        binaries: Vec<usize>,
        slack_map: SlackMap,
    ) -> Result<Self> {
        let n = linear.len();
        let m = rhs.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(Error::Dimension(format!(
                "Q is {}x{}, expected {n}x{n}",
                quad.nrows(),
                quad.ncols()
            )));
        }
        if constraints.nrows() != m || constraints.ncols() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, expected {m}x{n}",
                constraints.nrows(),
                constraints.ncols()
            )));
        }
        check_symmetric(&quad)?;
        check_binaries(&binaries, n)?;
        let quad = (&quad + quad.transpose()) * 0.5;
        let inst = MbqpInstance {
            quad,
            linear,
            constraints,
            rhs,
            binaries,
            slack_map,
            seed_info: None,
        };
        for &j in &inst.binaries {
            if inst.complement_row(j).is_none() {
                return Err(Error::ModelViolation(format!(
                    "binary variable {} has no complement row x_j + w_j = 1",
                    j + 1
                )));
            }
        }
        Ok(inst)
    }

    pub fn with_seed_info(mut self, info: SeedInfo) -> Self {
        self.seed_info = Some(info);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.constraints.row(i).transpose()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.quad * x)) + 2.0 * self.linear.dot(x)
    }

    /// Max violation of `Ax = b`, `x ≥ 0` and binary integrality.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut v = (&self.constraints * x - &self.rhs).amax();
        for &xj in x.iter() {
            v = v.max(-xj);
        }
        for &j in &self.binaries {
            v = v.max(x[j].min(1.0 - x[j]).abs());
        }
        v
    }

    /// Same instance with right-hand side `b + delta`.
    pub fn with_rhs_shift(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.num_rows() {
            return Err(Error::Dimension(format!(
                "rhs shift has length {}, expected {}",
                delta.len(),
                self.num_rows()
            )));
        }
        let mut out = self.clone();
        out.rhs += delta;
        Ok(out)
    }

    /// Row index of a complement row `x_j + w = 1` for binary `j`, where `w`
    /// is a column used by no other row and absent from the objective.
    pub fn complement_row(&self, j: usize) -> Option<usize> {
        find_complement_row(
            &self.constraints,
            &self.rhs,
            &self.quad,
            &self.linear,
            &self.binaries,
            j,
        )
        .map(|(row, _)| row)
    }

    /// Standard-form row holding raw constraint `raw_index`.
    pub fn constraint_row(&self, raw_index: usize) -> Option<usize> {
        self.slack_map.constraint_rows.get(raw_index).copied()
    }

    /// Minimum eigenvalue of Q (≥ 0 for convex objectives).
    pub fn quad_min_eigenvalue(&self) -> f64 {
        if self.num_vars() == 0 {
            return 0.0;
        }
        crate::numerics::min_eigenvalue(&self.quad)
    }

    pub fn is_convex(&self) -> bool {
        self.quad_min_eigenvalue() >= -1e-9 * (1.0 + self.quad.amax())
    }
}

fn find_complement_row(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    quad: &DMatrix<f64>,
    linear: &DVector<f64>,
    binaries: &[usize],
    j: usize,
) -> Option<(usize, usize)> {
    let (m, n) = a.shape();
    for i in 0..m {
        if (b[i] - 1.0).abs() > 1e-12 || (a[(i, j)] - 1.0).abs() > 1e-12 {
            continue;
        }
        let nz: Vec<usize> = (0..n).filter(|&k| a[(i, k)] != 0.0).collect();
        if nz.len() != 2 {
            continue;
        }
        let w = if nz[0] == j { nz[1] } else { nz[0] };
        if (a[(i, w)] - 1.0).abs() > 1e-12 || binaries.contains(&w) || linear[w] != 0.0 {
            continue;
        }
        if quad.row(w).iter().any(|&v| v != 0.0) {
            continue;
        }
        if (0..m).any(|r| r != i && a[(r, w)] != 0.0) {
            continue;
        }
        return Some((i, w));
    }
    None
}

/// Converts a raw problem to standard form.
///
/// Columns are ordered as: raw variables, one complement slack per binary
/// (binary order), one slack per inequality (constraint order). Rows are
/// ordered as: complement rows, then the raw constraints in order. Binaries
/// that already own a complement row keep it, so the conversion is
/// idempotent on its own output.
pub fn to_standard_form(raw: &RawProblem) -> Result<MbqpInstance> {
    raw.validate()?;
    let n0 = raw.linear.len();
    let raw_a = DMatrix::from_fn(raw.constraints.len(), n0, |i, j| raw.constraints[i].coeffs[j]);
    let raw_b = DVector::from_iterator(raw.constraints.len(), raw.constraints.iter().map(|c| c.rhs));

    let mut needs_complement = Vec::new();
    for &j in &raw.binaries {
        let existing = find_complement_row(&raw_a, &raw_b, &raw.quad, &raw.linear, &raw.binaries, j)
            .filter(|&(row, _)| raw.constraints[row].relation == Relation::Eq);
        if existing.is_none() {
            needs_complement.push(j);
        }
    }
    let ineq: Vec<usize> = (0..raw.constraints.len())
        .filter(|&i| raw.constraints[i].relation != Relation::Eq)
        .collect();

    let nc = needs_complement.len();
    let n = n0 + nc + ineq.len();
    let m = nc + raw.constraints.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut map = SlackMap {
        original_vars: n0,
        ..SlackMap::default()
    };
    for (k, &j) in needs_complement.iter().enumerate() {
        let col = n0 + k;
        a[(k, j)] = 1.0;
        a[(k, col)] = 1.0;
        b[k] = 1.0;
        map.complements.push(ComplementSlack {
            binary: j,
            column: col,
            row: k,
        });
    }
    for (i, con) in raw.constraints.iter().enumerate() {
        let row = nc + i;
        for (j, &v) in con.coeffs.iter().enumerate() {
            a[(row, j)] = v;
        }
        b[row] = con.rhs;
        map.constraint_rows.push(row);
    }
    for (k, &i) in ineq.iter().enumerate() {
        let col = n0 + nc + k;
        let row = nc + i;
        let sign = if raw.constraints[i].relation == Relation::Le {
            1.0
        } else {
            -1.0
        };
        a[(row, col)] = sign;
        map.inequalities.push(InequalitySlack {
            constraint: i,
            column: col,
            row,
            sign,
        });
    }
    let mut quad = DMatrix::zeros(n, n);
    quad.view_mut((0, 0), (n0, n0)).copy_from(&raw.quad);
    let mut linear = DVector::zeros(n);
    linear.rows_mut(0, n0).copy_from(&raw.linear);
    MbqpInstance::new(quad, linear, a, b, raw.binaries.clone(), map)
}

/// Views a standard-form instance as a raw problem of equalities.
pub fn to_raw(inst: &MbqpInstance) -> RawProblem {
    let constraints = (0..inst.num_rows())
        .map(|i| {
            RawConstraint::new(
                inst.constraints.row(i).iter().copied().collect(),
                Relation::Eq,
                inst.rhs[i],
            )
        })
        .collect();
    RawProblem {
        quad: inst.quad.clone(),
        linear: inst.linear.clone(),
        constraints,
        binaries: inst.binaries.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_problem() -> RawProblem {
        RawProblem::linear(
            vec![-1.0, -1.0],
            vec![RawConstraint::new(vec![1.0, 1.0], Relation::Le, 1.0)],
            vec![0, 1],
        )
    }

    #[test]
    fn edge_problem_layout() {
        let inst = to_standard_form(&edge_problem()).unwrap();
        assert_eq!(inst.num_vars(), 5);
        assert_eq!(inst.num_rows(), 3);
        assert_eq!(inst.binaries, vec![0, 1]);
        let expect = DMatrix::from_row_slice(
            3,
            5,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 1.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(inst.constraints, expect);
        assert_eq!(inst.rhs.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(inst.slack_map.constraint_rows, vec![2]);
        assert_eq!(inst.slack_map.inequalities[0].column, 4);
    }

    #[test]
    fn equalities_without_binaries_unchanged() {
        let raw = RawProblem {
            quad: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            linear: DVector::zeros(2),
            constraints: vec![RawConstraint::new(vec![1.0, -1.0], Relation::Eq, 0.0)],
            binaries: vec![],
        };
        let inst = to_standard_form(&raw).unwrap();
        assert_eq!(inst.num_vars(), 2);
        assert_eq!(inst.num_rows(), 1);
        assert!(inst.binaries.is_empty());
        assert!(inst.slack_map.is_empty());
    }

    #[test]
    fn idempotent_on_own_output() {
        let inst = to_standard_form(&edge_problem()).unwrap();
        let again = to_standard_form(&to_raw(&inst)).unwrap();
        assert_eq!(again.constraints, inst.constraints);
        assert_eq!(again.rhs, inst.rhs);
        assert_eq!(again.linear, inst.linear);
    }

    #[test]
    fn rejects_short_row() {
        let raw = RawProblem::linear(
            vec![1.0, 1.0],
            vec![
                RawConstraint::new(vec![1.0, 1.0], Relation::Le, 1.0),
                RawConstraint::new(vec![1.0], Relation::Le, 1.0),
            ],
            vec![],
        );
        match to_standard_form(&raw) {
            Err(Error::BadRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_complement_rejected() {
        let err = MbqpInstance::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            vec![0],
            SlackMap::default(),
        );
        assert!(matches!(err, Err(Error::ModelViolation(_))));
    }
}
