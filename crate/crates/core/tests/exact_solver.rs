use copsense::exact::{
    chromatic_index, is_bounded, solve_cont, solve_exact, solve_exact_with, zeta_box_probe,
    zeta_probe, ChromaticIndex, ExactOptions, DEFAULT_NODE_BUDGET,
};
use copsense::model::{
    generate_comb, generate_sslp, generate_ssqp, to_standard_form, Graph, RawConstraint,
    RawProblem, Relation,
};
use nalgebra::{DMatrix, DVector};

#[test]
fn petersen_needs_four_colours() {
    assert_eq!(chromatic_index(&Graph::petersen(), 1_000_000), ChromaticIndex::Exact(4));
}

#[test]
fn budget_gives_vizing_bracket() {
    assert_eq!(chromatic_index(&Graph::petersen(), 3), ChromaticIndex::Between(3, 4));
}

#[test]
fn pruning_matches_enumeration() {
    for seed in 0..4 {
        let instances = [
            generate_comb(seed, 0.5, 3, 2.0).unwrap(),
            generate_sslp(seed, 0.5, 4, 2).unwrap(),
            generate_ssqp(seed, 0.5, 4, 2).unwrap(),
        ];
        for inst in &instances {
            let pruned = solve_exact(inst, DEFAULT_NODE_BUDGET).unwrap();
            let full = solve_exact_with(
                inst,
                &ExactOptions {
                    node_budget: DEFAULT_NODE_BUDGET,
                    prune: false,
                },
            )
            .unwrap();
            assert_eq!(pruned.status, full.status);
            assert!(
                (pruned.value - full.value).abs() <= 1e-6 * (1.0 + full.value.abs()),
                "seed {seed}: {} vs {}",
                pruned.value,
                full.value
            );
        }
    }
}

#[test]
fn relaxation_is_a_lower_bound() {
    for seed in 0..4 {
        let inst = generate_ssqp(seed, 0.5, 4, 2).unwrap();
        let z = solve_exact(&inst, DEFAULT_NODE_BUDGET).unwrap().value;
        let cont = solve_cont(&inst).unwrap();
        assert!(cont.value <= z + 1e-6 * (1.0 + z.abs()));
        assert!(is_bounded(&inst).unwrap());
    }
}

#[test]
fn zeta_at_zero_and_monotone() {
    let inst = generate_sslp(7, 0.5, 4, 2).unwrap();
    let z = solve_exact(&inst, DEFAULT_NODE_BUDGET).unwrap().value;
    let mut prev = f64::INFINITY;
    for eps in [0.0, 1e-3, 1e-2, 1e-1] {
        let r = zeta_probe(&inst, eps, DEFAULT_NODE_BUDGET).unwrap();
        assert!(r.complete);
        if eps == 0.0 {
            assert!((r.value - z).abs() <= 1e-6 * (1.0 + z.abs()));
        }
        assert!(r.value <= prev + 1e-7 * (1.0 + prev.abs()));
        prev = r.value;
    }
}

#[test]
fn box_probe_diverges_on_indefinite_instance() {
    let raw = RawProblem {
        quad: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        linear: DVector::zeros(2),
        constraints: vec![RawConstraint::new(vec![1.0, -1.0], Relation::Eq, 0.0)],
        binaries: vec![],
    };
    let inst = to_standard_form(&raw).unwrap();
    let at_zero = zeta_box_probe(&inst, 0.0, 1e4).unwrap();
    assert!(at_zero.abs() < 1e-6);
    let mut prev = f64::INFINITY;
    for cap in [1e2, 1e3, 1e4] {
        let v = zeta_box_probe(&inst, 0.1, cap).unwrap();
        assert!(v < prev);
        prev = v;
    }
    assert!(prev <= -1e3);
}

#[test]
fn optimum_is_feasible_and_above_the_relaxation() {
    // Degenerate SSQP instances where the leaf QPs need multiplier repair.
    for (seed, density) in [(6, 0.3), (7, 0.3), (6, 0.5)] {
        let inst = generate_ssqp(seed, density, 6, 2).unwrap();
        let cont = solve_cont(&inst).unwrap();
        let exact = solve_exact(&inst, DEFAULT_NODE_BUDGET).unwrap();
        assert!(exact.is_optimal());
        assert!(exact.value >= cont.value - 1e-9, "{} < {}", exact.value, cont.value);
        assert!(inst.violation(exact.x.as_ref().unwrap()) <= 1e-9);
    }
}
