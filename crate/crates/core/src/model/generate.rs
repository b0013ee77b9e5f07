//! Random instance families: cardinality-constrained weighted stable set on
//! a bipartite graph, and set-selection problems with linear or convex
//! quadratic objectives.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{to_standard_form, MbqpInstance, RawConstraint, RawProblem, Relation, SeedInfo};
use crate::error::{Error, Result};

fn check_density(d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "density {d} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Weighted stable set with a cardinality constraint:
/// `min −cᵀx  s.t.  Σx ≤ p,  x_i + x_j ≤ 1 for (i,j) ∈ E,  x binary`.
///
/// The graph is bipartite with `v` vertices per side; each cross pair is an
/// edge with probability `d`. Weights are uniform on `{0,…,10}`. The
/// cardinality row is the first raw constraint.
pub fn generate_comb(seed: u64, d: f64, v: usize, p: f64) -> Result<MbqpInstance> {
    check_density(d)?;
    if v == 0 {
        return Err(Error::InvalidArgument("side size must be at least 1".into()));
    }
    if p < 0.0 {
        return Err(Error::InvalidArgument("cardinality bound must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * v;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0..=10) as f64).collect();
    let mut constraints = vec![RawConstraint::new(vec![1.0; n], Relation::Le, p)];
    for i in 0..v {
        for j in v..n {
            if rng.random::<f64>() < d {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row[j] = 1.0;
                constraints.push(RawConstraint::new(row, Relation::Le, 1.0));
            }
        }
    }
    let linear = weights.iter().map(|w| -0.5 * w).collect();
    let raw = RawProblem::linear(linear, constraints, (0..n).collect());
    let mut params = BTreeMap::new();
    params.insert("d".into(), d);
    params.insert("v".into(), v as f64);
    params.insert("p".into(), p);
    Ok(to_standard_form(&raw)?.with_seed_info(SeedInfo {
        generator: "comb".into(),
        seed,
        params,
    }))
}

/// Set-selection instance with a linear objective:
/// `min −2c_xᵀx + 2c_yᵀy  s.t.  a_iᵀx ≤ b_i,  x_i ≤ y_i,  x ≥ 0,  y binary`.
///
/// Variables are ordered `x` then `y`; the `m` resource rows come first
/// among the raw constraints.
pub fn generate_sslp(seed: u64, d: f64, n: usize, m: usize) -> Result<MbqpInstance> {
    selection(seed, d, n, m, false)
}

/// Same as [`generate_sslp`] plus `xᵀQx` with `Q = u₁u₁ᵀ + u₂u₂ᵀ`, entries of
/// `u_k` uniform on `{−1, 0, 1}`.
pub fn generate_ssqp(seed: u64, d: f64, n: usize, m: usize) -> Result<MbqpInstance> {
    selection(seed, d, n, m, true)
}

fn selection(seed: u64, d: f64, n: usize, m: usize, quadratic: bool) -> Result<MbqpInstance> {
    check_density(d)?;
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost_x: Vec<f64> = (0..n).map(|_| rng.random_range(0..=10) as f64).collect();
    let total = 2 * n;
    let mut constraints = Vec::with_capacity(m + n);
    for _ in 0..m {
        let mut row = vec![0.0; total];
        for entry in row.iter_mut().take(n) {
            let value = rng.random_range(0..=10) as f64;
            // Zero rows are kept as sampled.
            *entry = if rng.random::<f64>() < d { 0.0 } else { value };
        }
        let rhs = (0.5 * row.iter().sum::<f64>()).floor();
        constraints.push(RawConstraint::new(row, Relation::Le, rhs));
    }
    for i in 0..n {
        let mut row = vec![0.0; total];
        row[i] = 1.0;
        row[n + i] = -1.0;
        constraints.push(RawConstraint::new(row, Relation::Le, 0.0));
    }
    let mut quad = DMatrix::zeros(total, total);
    if quadratic {
        for _ in 0..2 {
            let u = DVector::from_fn(n, |_, _| rng.random_range(-1..=1) as f64);
            let outer = &u * u.transpose();
            let mut block = quad.view_mut((0, 0), (n, n));
            block += outer;
        }
    }
    let mut linear = DVector::zeros(total);
    for i in 0..n {
        linear[i] = -cost_x[i];
        linear[n + i] = 3.0;
    }
    let raw = RawProblem {
        quad,
        linear,
        constraints,
        binaries: (n..total).collect(),
    };
    let mut params = BTreeMap::new();
    params.insert("d".into(), d);
    params.insert("n".into(), n as f64);
    params.insert("m".into(), m as f64);
    let generator = if quadratic { "ssqp" } else { "sslp" };
    Ok(to_standard_form(&raw)?.with_seed_info(SeedInfo {
        generator: generator.into(),
        seed,
        params,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comb_without_edges() {
        let inst = generate_comb(11, 0.0, 3, 1.0).unwrap();
        // 6 vertices, 6 complements, one cardinality slack.
        assert_eq!(inst.num_vars(), 13);
        assert_eq!(inst.num_rows(), 7);
        assert_eq!(inst.binaries.len(), 6);
        assert_eq!(inst.slack_map.inequalities.len(), 1);
    }

    #[test]
    fn comb_complete_bipartite() {
        let inst = generate_comb(5, 1.0, 2, 2.0).unwrap();
        // cardinality row plus all four cross edges
        assert_eq!(inst.slack_map.constraint_rows.len(), 5);
    }

    #[test]
    fn comb_is_deterministic() {
        let a = generate_comb(7, 0.5, 5, 2.0).unwrap();
        let b = generate_comb(7, 0.5, 5, 2.0).unwrap();
        assert_eq!(a.constraints, b.constraints);
        assert_eq!(a.linear, b.linear);
    }

    #[test]
    fn sslp_full_density_is_vacuous() {
        let inst = generate_sslp(1, 1.0, 4, 3).unwrap();
        for k in 0..3 {
            let row = inst.constraint_row(k).unwrap();
            assert_eq!(inst.rhs[row], 0.0);
            assert!(inst.row(row).rows(0, 4).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ssqp_objective_is_psd() {
        for seed in 0..100 {
            let inst = generate_ssqp(seed, 0.5, 5, 2).unwrap();
            assert!(inst.quad_min_eigenvalue() >= -1e-9, "seed {seed}");
        }
    }
}
