use copsense::copositive::{
    perturb_certificate, read_certificate, synthesize_closed_form, write_certificate, ClosedFormMode,
    ClosedFormOptions, CopositivityVerdict, DualCertificate, Provenance, VerdictTag,
};
use copsense::exact::{solve_exact, DEFAULT_NODE_BUDGET};
use copsense::lift::{build_lifting, rank_one_lift};
use copsense::model::{generate_comb, generate_sslp, generate_ssqp, read_instance, write_instance, MbqpInstance};
use copsense::numerics::{solve_lp, sym_eigen, LpProblem};
use copsense::sensitivity::{
    aggregate_fit, mean_prediction, prediction_shift, relative_gap, select_weights, solve_shor1, FitSpec, LMode,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn undecided() -> CopositivityVerdict {
    CopositivityVerdict {
        tag: VerdictTag::Undecided,
        proof: None,
        witness: None,
        margin: f64::NAN,
    }
}

fn small_instance(kind: u8, seed: u64, density: f64) -> MbqpInstance {
    match kind % 3 {
        0 => generate_comb(seed, density, 2, 1.0).unwrap(),
        1 => generate_sslp(seed, density, 2, 1).unwrap(),
        _ => generate_ssqp(seed, density, 2, 1).unwrap(),
    }
}

/// Certificate with arbitrary multipliers on a small instance.
fn supplied(inst: &MbqpInstance, values: &[f64], theta: f64) -> DualCertificate {
    let lift = build_lifting(inst);
    let m = inst.num_rows();
    let alpha = DVector::from_fn(m, |i, _| values[i % values.len()]);
    let beta = DVector::from_fn(m, |i, _| values[(i + 1) % values.len()].abs());
    let gamma = DVector::from_fn(inst.binaries.len(), |j, _| values[(j + 2) % values.len()]);
    DualCertificate::new(&lift, alpha, beta, gamma, theta, vec![], undecided(), Provenance::Supplied).unwrap()
}

fn shift_vector(m: usize, steps: &[f64]) -> DVector<f64> {
    DVector::from_fn(m, |i, _| steps[i % steps.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prediction_moves_by_the_shift_formula(
        kind in 0u8..3,
        seed in 1u64..40,
        values in prop::collection::vec(-4.0f64..4.0, 3..6),
        theta in -10.0f64..10.0,
        steps in prop::collection::vec(-3.0f64..3.0, 1..4),
    ) {
        let inst = small_instance(kind, seed, 0.5);
        let cert = supplied(&inst, &values, theta);
        let delta = shift_vector(inst.num_rows(), &steps);
        let moved = cert.predict(&delta).unwrap() - cert.predict(&DVector::zeros(inst.num_rows())).unwrap();
        let scale = 1.0 + moved.abs();
        prop_assert!((moved - prediction_shift(&cert, &delta)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn perturbing_a_row_costs_its_squared_shift(
        kind in 0u8..3,
        seed in 1u64..40,
        values in prop::collection::vec(-4.0f64..4.0, 3..6),
        row_pick in 0usize..64,
        step in -4.0f64..4.0,
    ) {
        let inst = small_instance(kind, seed, 0.5);
        let cert = supplied(&inst, &values, 1.0);
        let lift = build_lifting(&inst);
        let row = row_pick % inst.num_rows();
        let moved = perturb_certificate(&cert, &lift, row).unwrap();
        let mut delta = DVector::zeros(inst.num_rows());
        delta[row] = step;
        let drop = cert.predict(&delta).unwrap() - moved.predict(&delta).unwrap();
        prop_assert!((drop - step * step).abs() <= 1e-9 * (1.0 + step * step));
        prop_assert!((moved.objective - cert.objective).abs() <= 1e-9 * (1.0 + cert.objective.abs()));
        prop_assert!(moved.matrix_mismatch(&lift).unwrap() <= 1e-9 * (1.0 + moved.matrix.amax()));
    }

    #[test]
    fn grid_mean_matches_the_weighted_fit_objective(
        kind in 0u8..3,
        seed in 1u64..40,
        ranges in prop::collection::vec(0usize..3, 1..4),
        p in prop::collection::vec(0.0f64..2.0, 1..4),
        delta in prop::collection::vec(-2.0f64..2.0, 1..4),
        l in -20.0f64..0.0,
    ) {
        let inst = small_instance(kind, seed, 0.5);
        let m = inst.num_rows();
        let rg: Vec<usize> = (0..m).map(|i| ranges[i % ranges.len()]).collect();
        let p: Vec<f64> = (0..m).map(|i| p[i % p.len()]).collect();
        let delta: Vec<f64> = (0..m).map(|i| delta[i % delta.len()]).collect();
        let (tau, r) = (1e-3, 2e-3);
        let mut spec = FitSpec::new(m).with_weights(select_weights(&rg));
        spec.tau = tau;
        spec.r = r;
        spec.l_mode = LMode::Variable;
        let (alpha, beta, theta) = aggregate_fit(&inst.rhs, &p, &delta, tau, r, l);
        let lift = build_lifting(&inst);
        let gamma = DVector::zeros(inst.binaries.len());
        let cert = DualCertificate::new(&lift, alpha, beta, gamma, theta, vec![], undecided(), Provenance::Supplied).unwrap();
        let second: f64 = (0..m)
            .map(|i| (0..=rg[i]).map(|k| (inst.rhs[i] + k as f64).powi(2)).sum::<f64>() / (rg[i] + 1) as f64)
            .sum();
        let total = mean_prediction(&cert, &rg).unwrap() + spec.objective(&p, &delta, l);
        let expected = r - tau * (1.0 + second);
        prop_assert!((total - expected).abs() <= 1e-9 * (1.0 + l.abs() + second));
    }

    #[test]
    fn lifted_inner_product_is_the_objective(
        kind in 0u8..3,
        seed in 1u64..40,
        point in prop::collection::vec(0.0f64..3.0, 1..6),
    ) {
        let inst = small_instance(kind, seed, 0.5);
        let n = inst.num_vars();
        let x = DVector::from_fn(n, |j, _| point[j % point.len()]);
        let lift = build_lifting(&inst);
        let y = rank_one_lift(&x).unwrap();
        let inner = lift.objective.dot(&y);
        let value = inst.objective(&x);
        prop_assert!((inner - value).abs() <= 1e-10 * (1.0 + value.abs()));
    }

    #[test]
    fn relative_gap_is_affine_in_the_second_bound(
        z in -50.0f64..50.0,
        below in 0.1f64..20.0,
        t in -1.0f64..2.0,
    ) {
        let p1 = z - below;
        let p2 = p1 + t * below;
        let g = relative_gap(z, p1, p2);
        prop_assert!((g.value - (1.0 - t)).abs() <= 1e-9 * (1.0 + t.abs()));
        prop_assert!(g.flag.is_none());
        prop_assert_eq!(relative_gap(z, p1, p1).value, 1.0);
        prop_assert_eq!(relative_gap(z, p1, z).value, 0.0);
    }

    #[test]
    fn eigen_reconstructs(entries in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        let d = ((entries.len() as f64).sqrt() as usize).max(1);
        let a = DMatrix::from_fn(d, d, |i, j| entries[(i * d + j) % entries.len()]);
        let m = (&a + a.transpose()) * 0.5;
        let e = sym_eigen(&m).unwrap();
        prop_assert!((e.reconstruct() - &m).amax() <= 1e-9 * (1.0 + m.amax()));
    }

    #[test]
    fn lp_reaches_strong_duality(
        rows in 1usize..4,
        extra in 1usize..5,
        entries in prop::collection::vec(-1.0f64..1.0, 40),
        x0 in prop::collection::vec(0.0f64..2.0, 8),
        y0 in prop::collection::vec(-1.0f64..1.0, 4),
        s0 in prop::collection::vec(0.0f64..1.0, 8),
    ) {
        let n = rows + extra;
        let a = DMatrix::from_fn(rows, n, |i, j| entries[(i * n + j) % entries.len()]);
        let x0 = DVector::from_fn(n, |j, _| x0[j]);
        let y0 = DVector::from_fn(rows, |i, _| y0[i]);
        let s0 = DVector::from_fn(n, |j, _| s0[j]);
        let p = LpProblem::new(a.transpose() * y0 + s0, a.clone(), &a * x0);
        let out = solve_lp(&p).unwrap();
        prop_assert!(out.is_optimal());
        let gap = p.cost.dot(&out.primal) - p.rhs.dot(&out.duals);
        prop_assert!(gap.abs() <= 1e-7);
        prop_assert!((&a * &out.primal - &p.rhs).amax() <= 1e-7);
        prop_assert!((&p.cost - a.transpose() * &out.duals).min() >= -1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bounds_stay_below_the_optimum(kind in 0u8..3, seed in 1u64..200, density in 0.2f64..0.8) {
        let inst = small_instance(kind, seed, density);
        let exact = solve_exact(&inst, DEFAULT_NODE_BUDGET).unwrap();
        prop_assume!(exact.is_optimal());
        let z = exact.value;
        let shor = solve_shor1(&inst).unwrap();
        prop_assert!(shor.predict(&DVector::zeros(inst.num_rows())).unwrap() <= z + 1e-4 * (1.0 + z.abs()));
        let cert = synthesize_closed_form(&inst, z, 1e-3, 1e-3, ClosedFormMode::Bounded, &ClosedFormOptions::default()).unwrap();
        prop_assert!(cert.objective <= z);
    }

    #[test]
    fn files_round_trip(kind in 0u8..3, seed in 1u64..200, values in prop::collection::vec(-4.0f64..4.0, 3..6)) {
        let dir = tempfile::tempdir().unwrap();
        let inst = small_instance(kind, seed, 0.5);
        let path = dir.path().join("instance.json");
        write_instance(&inst, &path).unwrap();
        let back = read_instance(&path).unwrap();
        prop_assert_eq!(&back.quad, &inst.quad);
        prop_assert_eq!(&back.linear, &inst.linear);
        prop_assert_eq!(&back.constraints, &inst.constraints);
        prop_assert_eq!(&back.rhs, &inst.rhs);
        prop_assert_eq!(&back.binaries, &inst.binaries);

        let cert = supplied(&inst, &values, 0.5);
        let path = dir.path().join("certificate.json");
        write_certificate(&cert, &path).unwrap();
        let back = read_certificate(&path).unwrap();
        prop_assert_eq!(back.objective, cert.objective);
        prop_assert_eq!(&back.matrix, &cert.matrix);
        let delta = DVector::from_element(inst.num_rows(), 1.0);
        prop_assert_eq!(back.predict(&delta).unwrap(), cert.predict(&delta).unwrap());
    }
}
