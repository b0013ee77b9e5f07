//! Closed-form dual certificate
//! `U = C + f₁ΣKK_i + Σ_j G_j(f₂, g, r) + τH − lT`
//! with parameters grown until a verifier accepts it.

use nalgebra::{DMatrix, DVector};

use super::constants::{compute_hj, compute_k_with, compute_pj, compute_rho, compute_uj};
use super::verify::{
    check_partition_with, check_spn_with, refute, CopositivityVerdict, PartitionOptions, VerdictTag,
};
use super::{DualCertificate, Provenance, SplitMultipliers};
use crate::error::{Error, Result};
use crate::exact::is_bounded;
use crate::lift::{build_lifting, Lifting};
use crate::model::MbqpInstance;
use crate::numerics::min_eigenvalue;
use crate::sdp::SdpSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ClosedFormMode {
    /// Bounded feasible region.
    Bounded,
    /// Convex objective, possibly unbounded region.
    PsdUnbounded,
}

#[derive(Debug, Clone)]
pub struct ClosedFormOptions {
    pub max_rounds: usize,
    /// Matrices up to this dimension are verified by simplicial partition;
    /// larger ones by witness search followed by the SPN test.
    pub partition_dim_limit: usize,
    pub partition: PartitionOptions,
    pub refute_restarts: usize,
    pub spn: SdpSettings,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        ClosedFormOptions {
            max_rounds: 40,
            partition_dim_limit: 12,
            partition: PartitionOptions::default(),
            refute_restarts: 64,
            spn: SdpSettings {
                tol: 1e-7,
                max_iter: 20_000,
                ..SdpSettings::default()
            },
        }
    }
}

/// Per-binary constants that do not depend on `g`.
struct BinaryData {
    j: usize,
    h1: f64,
}

fn f2_rule(inst: &MbqpInstance, bins: &[BinaryData], g: f64, r: f64) -> Result<f64> {
    let mut f2: f64 = 0.0;
    for b in bins {
        f2 = f2.max(2.0 * g / (b.h1 * b.h1));
        let p = compute_pj(inst, b.j, r, g)?;
        if p.is_finite() {
            f2 = f2.max(2.0 * g / (p * p)).max((g * g + 2.0 * r * g) / (r * p * p));
        }
    }
    Ok(f2)
}

fn verify(u: &DMatrix<f64>, opts: &ClosedFormOptions) -> CopositivityVerdict {
    if u.nrows() <= opts.partition_dim_limit {
        return check_partition_with(u, &opts.partition);
    }
    let r = refute(u, opts.refute_restarts);
    if r.tag == VerdictTag::NotCopositive {
        return r;
    }
    check_spn_with(u, &opts.spn)
}

/// Estimate of the largest `k` with `H − kI` copositive from witness
/// searches, for dimensions where partition is too expensive.
fn estimate_k(lift: &Lifting) -> f64 {
    let h = &lift.regularizer;
    let d = h.nrows();
    let top = h.diagonal().max();
    let eig = min_eigenvalue(h);
    if eig > 0.0 {
        return eig;
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let shifted = h - DMatrix::identity(d, d) * mid;
        if refute(&shifted, 16).tag == VerdictTag::NotCopositive {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Multipliers of `U(f₁, f₂, g, r, τ, l)` in split form. The penalty
/// weight of every row is `F = f₁ + f₂|B|`; the rest is
/// `C + τH + (r|B| − l)T − gΣN_j`, i.e. `α = 0`, `β = τ`, `γ = −g`,
/// `θ = τ + r|B| − l`, so the objective is `l − r|B| − τ(1 + Σbᵢ²)`.
pub(crate) fn closed_form_split(
    lift: &Lifting,
    f1: f64,
    f2: f64,
    g: f64,
    r: f64,
    tau: f64,
    l: f64,
) -> (SplitMultipliers, DVector<f64>) {
    let m = lift.num_rows();
    let nb = lift.binaries.len() as f64;
    let split = SplitMultipliers {
        alpha: vec![0.0; m],
        beta: vec![tau; m],
        theta: tau + r * nb - l,
        penalty: vec![f1 + f2 * nb; m],
    };
    (split, DVector::from_element(lift.binaries.len(), -g))
}

/// Synthesizes the closed-form certificate for a lower bound `l ≤ z(b)`.
///
/// The proof constants of the construction are not computable, so the
/// parameters start at the computable floors (with `τ(1 + Σbᵢ²) = ε₀`) and `f₁`, `g`
/// are doubled, `f₂` recomputed, until the verifier accepts `U`. When no
/// round verifies, the last certificate is returned with its verdict.
pub fn synthesize_closed_form(
    inst: &MbqpInstance,
    l: f64,
    eps0: f64,
    r: f64,
    mode: ClosedFormMode,
    opts: &ClosedFormOptions,
) -> Result<DualCertificate> {
    if !(eps0 > 0.0) || !(r > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need eps0 > 0, r > 0 and finite l; got eps0 = {eps0}, r = {r}, l = {l}"
        )));
    }
    match mode {
        ClosedFormMode::Bounded => {
            if !is_bounded(inst)? {
                return Err(Error::InvalidArgument(
                    "feasible region is unbounded; the bounded construction does not apply".into(),
                ));
            }
        }
        ClosedFormMode::PsdUnbounded => {
            if !inst.is_convex() {
                return Err(Error::InvalidArgument(
                    "objective is not convex; the unbounded construction does not apply".into(),
                ));
            }
        }
    }
    let lift = build_lifting(inst);
    let lam_c = min_eigenvalue(&lift.objective);
    let l_plus = l.max(0.0);
    // spreads ε₀ over the 1 + Σbᵢ² terms it multiplies in the objective
    let tau = eps0 / (1.0 + lift.rhs.norm_squared());
    let bins: Vec<BinaryData> = inst
        .binaries
        .iter()
        .map(|&j| Ok(BinaryData { j, h1: compute_hj(inst, j, 1.0)? }))
        .collect::<Result<_>>()?;
    let u_eps: Vec<f64> = inst
        .binaries
        .iter()
        .map(|&j| compute_uj(inst, j, eps0))
        .collect::<Result<_>>()?;
    let min_u = u_eps.iter().copied().fold(f64::INFINITY, f64::min);

    let (mut f1, mut g, k, k_certified) = match mode {
        ClosedFormMode::Bounded => {
            let (k, certified) = if lift.dim <= opts.partition_dim_limit {
                match compute_k_with(&lift, &opts.partition) {
                    Ok(k) => (k, true),
                    Err(_) => (estimate_k(&lift), false),
                }
            } else {
                (estimate_k(&lift), false)
            };
            let k = k.max(1e-12);
            let spread = lam_c.abs() + l_plus;
            let mut f1 = ((inst.quad_min_eigenvalue().abs() + 1.0) / k).max(spread / (eps0 * eps0));
            if min_u.is_finite() {
                f1 = f1.max(spread / (min_u * min_u));
            }
            let g = spread / (2.0 * eps0 * eps0);
            (f1, g, Some(k), certified)
        }
        ClosedFormMode::PsdUnbounded => {
            let rho = compute_rho(inst, l)?.map(|info| info.rho).unwrap_or(0.0);
            let lead = (rho + l).max(0.0);
            let mut f1 = lead.max(1.0 / (2.0 * tau)).max(lead / (eps0 * eps0));
            if min_u.is_finite() {
                f1 = f1.max(lead / (min_u * min_u));
            }
            (f1, lead / (eps0 * eps0), None, false)
        }
    };
    g = g.max(1e-6);

    let mut last = None;
    for round in 0..opts.max_rounds.max(1) {
        let f2 = f2_rule(inst, &bins, g, r)?;
        let (split, gamma) = closed_form_split(&lift, f1, f2, g, r, tau, l);
        let provenance = Provenance::ClosedForm {
            f1,
            f2,
            g,
            r,
            tau,
            l,
            rounds: round + 1,
            k,
            k_certified,
        };
        let mut cert = DualCertificate::from_split(
            &lift,
            split,
            gamma,
            vec![],
            CopositivityVerdict {
                tag: VerdictTag::Undecided,
                proof: None,
                witness: None,
                margin: f64::NAN,
            },
            provenance,
        )?;
        let verdict = verify(&cert.matrix, opts);
        let done = verdict.is_copositive();
        cert.verdict = verdict;
        if done {
            return Ok(cert);
        }
        last = Some(cert);
        f1 *= 2.0;
        g *= 2.0;
    }
    Ok(last.expect("at least one round runs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{build_lifting, inner, rank_one_lift};
    use crate::model::{to_standard_form, RawConstraint, RawProblem, Relation};

    #[test]
    fn objective_identity_by_hand() {
        // m = 1, b₁ = 2, one binary, τ = 0.01, r = 0.001, l = 5
        let raw = RawProblem::linear(vec![0.0], vec![], vec![0]);
        let mut inst = to_standard_form(&raw).unwrap();
        inst.rhs[0] = 2.0;
        let lift = build_lifting(&inst);
        let (split, gamma) = closed_form_split(&lift, 3.0, 7.0, 1.0, 0.001, 0.01, 5.0);
        let cert = DualCertificate::from_split(
            &lift,
            split,
            gamma,
            vec![],
            CopositivityVerdict {
                tag: VerdictTag::Undecided,
                proof: None,
                witness: None,
                margin: f64::NAN,
            },
            Provenance::Supplied,
        )
        .unwrap();
        assert!((cert.objective - 4.949).abs() < 1e-12);
        let aggregated = super::super::dual_objective(&lift.rhs, &cert.alpha, &cert.beta, cert.theta);
        assert!((aggregated - 4.949).abs() < 1e-12);
        // U = C + 10·KK + 7·(−N + ...) built term by term
        let mut u = &lift.objective + &lift.row_penalty[0] * 10.0 - &lift.complementarity[0] * 1.0;
        u += &lift.regularizer * 0.01;
        u += &lift.homog * (0.001 - 5.0);
        assert!((&u - &cert.matrix).amax() < 1e-12);
    }

    fn one_variable(c: f64) -> MbqpInstance {
        MbqpInstance::new(
            DMatrix::zeros(1, 1),
            DVector::from_vec(vec![c]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            vec![],
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn linear_objective_without_rows() {
        // Q = 0, m = 0, no binaries, l = 0: U = C + τT
        let opts = ClosedFormOptions {
            max_rounds: 1,
            ..ClosedFormOptions::default()
        };
        let cert = synthesize_closed_form(&one_variable(1.0), 0.0, 1e-3, 1e-3, ClosedFormMode::PsdUnbounded, &opts)
            .unwrap();
        assert_eq!(cert.verdict.tag, VerdictTag::Copositive);
        // c < 0 makes the problem unbounded below
        let err = synthesize_closed_form(&one_variable(-1.0), 0.0, 1e-3, 1e-3, ClosedFormMode::PsdUnbounded, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::ModelViolation(_)), "{err}");
        let lift = build_lifting(&one_variable(-1.0));
        let u = &lift.objective + &lift.homog * 1e-3;
        assert_eq!(check_partition_with(&u, &PartitionOptions::default()).tag, VerdictTag::NotCopositive);
    }

    #[test]
    fn single_edge_certificate() {
        let inst = to_standard_form(&RawProblem::linear(
            vec![-1.0, -1.0],
            vec![RawConstraint::new(vec![1.0, 1.0], Relation::Le, 1.0)],
            vec![0, 1],
        ))
        .unwrap();
        let cert = synthesize_closed_form(
            &inst,
            -2.0,
            0.05,
            1e-3,
            ClosedFormMode::Bounded,
            &ClosedFormOptions::default(),
        )
        .unwrap();
        assert!(cert.objective >= -2.1);
        assert_eq!(cert.verdict.tag, VerdictTag::Copositive, "{:?}", cert.provenance);
        // sanity: the optimal point has nonnegative value under U
        let y = rank_one_lift(&DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert!(inner(&cert.matrix, &y) >= 0.0);
    }
}
