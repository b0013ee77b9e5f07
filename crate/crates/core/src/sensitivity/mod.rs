//! Lower bounds on `z(b + Δb)`: baseline relaxations with fixed
//! multipliers, and copositive dual certificates fitted over the inner
//! approximation `S₊ + S_P`.

mod report;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use report::{evaluate_instance, EvalOptions, GroundTruth, ReportRow, SensitivityReport};

use crate::copositive::verify::{spn_defect, spn_verdict};
use crate::copositive::check_spn_with;
use crate::copositive::{CopositivityVerdict, DualCertificate, Provenance, SplitMultipliers, VerdictTag};
use crate::error::{Error, Result};
use crate::exact::{mass_bound, solve_cont};
use crate::lift::{build_lifting, mccormick_rows, Lifting};
use crate::model::MbqpInstance;
use crate::numerics::SolveStatus;
use crate::sdp::{matrix_terms, solve_sdp_with, Cone, SdpProblem, SdpSettings, SdpStatus, Term};

/// Box placed on the otherwise free multipliers of the fitting problem.
const MULTIPLIER_BOX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Shor1,
    Shor2,
    Cont,
    ClosedForm,
    FitDual,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Shor1,
        Method::Shor2,
        Method::Cont,
        Method::ClosedForm,
        Method::FitDual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Shor1 => "Shor1",
            Method::Shor2 => "Shor2",
            Method::Cont => "Cont",
            Method::ClosedForm => "ClosedForm",
            Method::FitDual => "FitDual",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Bound of a relaxation as a function of the right-hand side:
/// `bound + Σ linearᵢΔbᵢ + Σ quadraticᵢ((bᵢ+Δbᵢ)² − bᵢ²)`, less
/// `defect·(1 + U)²` where `U` bounds `Σx` over the shifted feasible set.
///
/// The multipliers of a first-order solve leave the dual matrix
/// `P + N` with `P` PSD and `N ≥ −defect`; for feasible `y = (1, x) ≥ 0`
/// the deficit `yᵀNy` is at least `−defect·(Σy)²`.
#[derive(Debug, Clone)]
pub struct RelaxationBound {
    pub method: Method,
    /// Primal value of the relaxation.
    pub value: f64,
    /// Dual value, the constant term of the prediction.
    pub bound: f64,
    pub rhs: DVector<f64>,
    pub linear: DVector<f64>,
    pub quadratic: DVector<f64>,
    pub defect: f64,
    constraints: DMatrix<f64>,
    /// Whether the prediction is a proven bound.
    pub verified: bool,
}

impl RelaxationBound {
    pub fn predict(&self, delta: &DVector<f64>) -> Result<f64> {
        if delta.len() != self.rhs.len() {
            return Err(Error::Dimension(format!(
                "Δb has length {}, relaxation has {} rows",
                delta.len(),
                self.rhs.len()
            )));
        }
        let mut out = self.bound;
        for i in 0..delta.len() {
            let b = self.rhs[i];
            let nb = b + delta[i];
            out += self.linear[i] * delta[i] + self.quadratic[i] * (nb * nb - b * b);
        }
        if self.defect > 0.0 {
            let shifted = &self.rhs + delta;
            let mass = mass_bound(&self.constraints, &shifted)?.ok_or_else(|| {
                Error::NoCertificate(format!(
                    "{} multipliers are inexact and the shifted feasible set is unbounded",
                    self.method.name()
                ))
            })?;
            out -= self.defect * (1.0 + mass).powi(2);
        }
        Ok(out)
    }
}

/// Defect, relative to the dual matrix, below which no bump is tried.
const DEFECT_TARGET: f64 = 1e-9;

const PENALTY_BUMPS: [f64; 7] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Settings for the fit. Its optimum is usually approached but not
/// attained, so the tolerance is loose; soundness comes from the check of
/// the rebuilt matrix.
pub fn fit_settings() -> SdpSettings {
    SdpSettings {
        tol: 1e-4,
        max_iter: 10_000,
        ..SdpSettings::default()
    }
}

pub fn relaxation_settings() -> SdpSettings {
    SdpSettings {
        tol: 1e-6,
        max_iter: 30_000,
        ..SdpSettings::default()
    }
}

/// Shor relaxation over `S₊ ∩ S_P`: `⟨T,Y⟩ = 1`, `⟨N_j,Y⟩ = 0`,
/// `⟨A_i,Y⟩ = 2bᵢ`. The prediction keeps the multipliers of the `A_i` rows.
pub fn solve_shor1(inst: &MbqpInstance) -> Result<RelaxationBound> {
    solve_shor(inst, false, &relaxation_settings())
}

/// [`solve_shor1`] plus `⟨AA_i,Y⟩ = bᵢ²`, which also implies the McCormick
/// inequalities between binaries.
pub fn solve_shor2(inst: &MbqpInstance) -> Result<RelaxationBound> {
    solve_shor(inst, true, &relaxation_settings())
}

pub fn solve_shor_with(inst: &MbqpInstance, augmented: bool, settings: &SdpSettings) -> Result<RelaxationBound> {
    solve_shor(inst, augmented, settings)
}

fn solve_shor(inst: &MbqpInstance, augmented: bool, settings: &SdpSettings) -> Result<RelaxationBound> {
    let lift = build_lifting(inst);
    let m = lift.num_rows();
    let d = lift.dim;
    let method = if augmented { Method::Shor2 } else { Method::Shor1 };
    let mut sdp = SdpProblem::new();
    let (y, _) = sdp.add_doubly_nonneg_block(d);
    sdp.set_block_cost(y, lift.objective.clone());
    let t_row = sdp.add_row(matrix_terms(y, &lift.homog), 1.0);
    let comp_rows: Vec<usize> = lift
        .complementarity
        .iter()
        .map(|n| sdp.add_row(matrix_terms(y, n), 0.0))
        .collect();
    let linear_rows: Vec<usize> = (0..m)
        .map(|i| sdp.add_row(matrix_terms(y, &lift.row_linear[i]), 2.0 * lift.rhs[i]))
        .collect();
    // Every binary has a complement row, so with `⟨KK_i,Y⟩ = 0` implied by the
    // quadratic rows each McCormick inequality is an entry of `Y` and already
    // holds in the nonnegative cone. Adding them makes the multipliers
    // degenerate and the solver stalls.
    let quad_rows: Vec<usize> = if augmented {
        (0..m)
            .map(|i| sdp.add_row(matrix_terms(y, &lift.row_quad[i]), lift.rhs[i] * lift.rhs[i]))
            .collect()
    } else {
        vec![]
    };
    let out = solve_sdp_with(&sdp, settings)?;
    // Any multipliers give a bound once their defect is charged, so an
    // iteration-limited run is kept. The dual optimum of the augmented
    // relaxation is usually not attained.
    if out.status == SdpStatus::Infeasible {
        return Err(Error::Solver(format!("{} relaxation is infeasible", method.name())));
    }

    let dual = |r: usize| out.duals[r];
    let theta = dual(t_row);
    let gamma: Vec<f64> = comp_rows.iter().map(|&r| dual(r)).collect();
    let mu: Vec<f64> = linear_rows.iter().map(|&r| dual(r)).collect();
    let nu: Vec<f64> = if augmented {
        quad_rows.iter().map(|&r| dual(r)).collect()
    } else {
        vec![0.0; m]
    };
    let mut slack = lift.objective.clone() - &lift.homog * theta;
    for (j, n) in lift.complementarity.iter().enumerate() {
        slack -= n * gamma[j];
    }
    for i in 0..m {
        slack -= &lift.row_linear[i] * mu[i];
        slack -= &lift.row_quad[i] * nu[i];
    }
    let guess = tie_nonneg(&out.duals, d);
    // With the quadratic rows, `bump·KK_i` may be added to the dual matrix:
    // it moves (θ, μᵢ, νᵢ) by (−bᵢ², bᵢ, −1)·bump and leaves the bound at
    // Δb = 0 unchanged. It helps when the multipliers are far from attained.
    let bumps: &[f64] = if augmented { &PENALTY_BUMPS } else { &PENALTY_BUMPS[..1] };
    let mut best = (f64::INFINITY, 0.0);
    for &bump in bumps {
        let mut trial = slack.clone();
        for pen in &lift.row_penalty {
            trial += pen * bump;
        }
        let defect = spn_defect(&trial, guess.clone());
        if defect < best.0 {
            best = (defect, bump);
        }
        if defect <= DEFECT_TARGET * (1.0 + slack.amax()) {
            break;
        }
    }
    let (defect, bump) = best;
    let theta = theta - bump * (0..m).map(|i| lift.rhs[i] * lift.rhs[i]).sum::<f64>();
    let mu: Vec<f64> = (0..m).map(|i| mu[i] + bump * lift.rhs[i]).collect();
    let nu: Vec<f64> = (0..m).map(|i| nu[i] - bump).collect();
    let bound = theta + (0..m).map(|i| 2.0 * lift.rhs[i] * mu[i] + lift.rhs[i].powi(2) * nu[i]).sum::<f64>();
    let verified = defect == 0.0 || mass_bound(&inst.constraints, &inst.rhs)?.is_some();
    Ok(RelaxationBound {
        method,
        value: lift.objective.dot(&out.blocks[y]),
        bound,
        rhs: lift.rhs.clone(),
        linear: DVector::from_fn(m, |i, _| 2.0 * mu[i]),
        quadratic: DVector::from_vec(nu),
        defect,
        constraints: inst.constraints.clone(),
        verified,
    })
}

/// Nonnegative part of a doubly nonnegative block's dual, read from the
/// multipliers of the rows tying its two copies. Those rows are the first
/// ones added to the problem.
fn tie_nonneg(duals: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut nonneg = DMatrix::zeros(d, d);
    let mut r = 0;
    for j in 0..d {
        for i in 0..=j {
            let v = if i == j { duals[r] } else { 0.5 * duals[r] };
            nonneg[(i, j)] = v.max(0.0);
            nonneg[(j, i)] = v.max(0.0);
            r += 1;
        }
    }
    nonneg
}

/// Continuous relaxation with its equality multipliers held fixed, a valid
/// Lagrangian bound for convex objectives.
pub fn cont_bound(inst: &MbqpInstance) -> Result<RelaxationBound> {
    let out = solve_cont(inst)?;
    if out.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("continuous relaxation ended {:?}", out.status)));
    }
    let m = inst.num_rows();
    Ok(RelaxationBound {
        method: Method::Cont,
        value: out.value,
        bound: out.value,
        rhs: inst.rhs.clone(),
        linear: out.duals,
        quadratic: DVector::zeros(m),
        defect: 0.0,
        constraints: inst.constraints.clone(),
        verified: inst.is_convex(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LMode {
    Fixed(f64),
    Variable,
}

/// Parameters of the fitting problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub tau: f64,
    pub r: f64,
    /// Weight on `pᵢ`, the squared-penalty multiplier of row `i`.
    pub w1: Vec<f64>,
    /// Weight on `δᵢ`, the linear-penalty multiplier of row `i`.
    pub w2: Vec<f64>,
    pub l_mode: LMode,
    pub use_mccormick: bool,
    pub use_linear_penalty: bool,
    /// The fitted matrix is required to be `P + N + interior·I`, leaving room
    /// for rounding when the witness is checked.
    #[serde(default = "default_interior")]
    pub interior: f64,
    /// Lower bound on the `w⁽¹⁾` used while solving. A zero weight leaves the
    /// row's penalty free, the optimum is then not attained and the solver
    /// stalls.
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
}

fn default_weight_floor() -> f64 {
    1e-2
}

fn default_interior() -> f64 {
    1e-4
}

impl FitSpec {
    /// Zero weights, variable `l`, all columns enabled, `τ = r = 10⁻³`.
    pub fn new(rows: usize) -> Self {
        FitSpec {
            tau: 1e-3,
            r: 1e-3,
            w1: vec![0.0; rows],
            w2: vec![0.0; rows],
            l_mode: LMode::Variable,
            use_mccormick: true,
            use_linear_penalty: true,
            interior: default_interior(),
            weight_floor: default_weight_floor(),
        }
    }

    pub fn with_weights(mut self, (w1, w2): (Vec<f64>, Vec<f64>)) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.w1.len() != rows || self.w2.len() != rows {
            return Err(Error::Dimension(format!(
                "weights have lengths {} and {}, instance has {rows} rows",
                self.w1.len(),
                self.w2.len()
            )));
        }
        if self.w1.iter().chain(&self.w2).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        if !(self.tau >= 0.0) || !(self.r >= 0.0) || !(self.interior >= 0.0) || !(self.weight_floor >= 0.0) {
            return Err(Error::InvalidArgument(
                "tau, r, interior and weight_floor must be nonnegative".into(),
            ));
        }
        if let LMode::Fixed(l) = self.l_mode {
            if !l.is_finite() {
                return Err(Error::InvalidArgument(format!("fixed l must be finite, got {l}")));
            }
        }
        Ok(())
    }

    fn solve_weight(&self, i: usize) -> f64 {
        self.w1[i].max(self.weight_floor)
    }

    /// Fitting objective `(−l if variable) + Σ w⁽¹⁾ᵢpᵢ − Σ w⁽²⁾ᵢδᵢ`.
    pub fn objective(&self, p: &[f64], delta: &[f64], l: f64) -> f64 {
        let lead = match self.l_mode {
            LMode::Variable => -l,
            LMode::Fixed(_) => 0.0,
        };
        lead + p.iter().zip(&self.w1).map(|(a, b)| a * b).sum::<f64>()
            - delta.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Weights making the fitting objective the negated average prediction over
/// `Δbᵢ ∈ {0, …, rgᵢ}`: `w⁽¹⁾ = E[Δbᵢ²]` and `w⁽²⁾ = E[2Δbᵢ]`.
pub fn select_weights(rg: &[usize]) -> (Vec<f64>, Vec<f64>) {
    rg.iter()
        .map(|&k| {
            let count = (k + 1) as f64;
            let squares: usize = (0..=k).map(|x| x * x).sum();
            let doubled: usize = (0..=k).map(|x| 2 * x).sum();
            (squares as f64 / count, doubled as f64 / count)
        })
        .unzip()
}

/// Aggregated multipliers of a fitted certificate:
/// `αᵢ = −pᵢbᵢ − δᵢ`, `βᵢ = pᵢ + τ`, `θ = Σ(pᵢbᵢ² + 2δᵢbᵢ) + τ − (l + r)`.
/// McCormick rows are homogeneous and add nothing to `α` or `θ`.
pub fn aggregate_fit(
    b: &DVector<f64>,
    p: &[f64],
    delta: &[f64],
    tau: f64,
    r: f64,
    l: f64,
) -> (DVector<f64>, DVector<f64>, f64) {
    let m = b.len();
    let alpha = DVector::from_fn(m, |i, _| -p[i] * b[i] - delta[i]);
    let beta = DVector::from_fn(m, |i, _| p[i] + tau);
    let theta = (0..m).map(|i| p[i] * b[i] * b[i] + 2.0 * delta[i] * b[i]).sum::<f64>() + tau - (l + r);
    (alpha, beta, theta)
}

/// Fits a certificate `M = C + ΣpᵢKK_i + ΣδᵢK_i + Σγ_jN_j − Σσ_kS_k + τH −
/// (l+r)T` with `M ∈ S₊ + S_P`, minimizing [`FitSpec::objective`].
pub fn fit_dual(inst: &MbqpInstance, spec: &FitSpec) -> Result<DualCertificate> {
    fit_dual_with(inst, spec, &fit_settings())
}

struct FitMultipliers {
    p: Vec<f64>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
    sigma: Vec<f64>,
    l: f64,
    /// Starting point for the nonnegative part of the witness.
    nonneg: Option<DMatrix<f64>>,
}

/// With a variable `l` the fit is solved through its Lagrange dual, a
/// relaxation over `Y ∈ S₊ ∩ S_P`:
///
/// ```text
/// minimize   ⟨C + τH − rT − κI, Y⟩
/// subject to ⟨T,Y⟩ = 1,  ⟨KK_i,Y⟩ ≤ w⁽¹⁾ᵢ,  ⟨A_i,Y⟩ = 2bᵢ + w⁽²⁾ᵢ,
///            ⟨N_j,Y⟩ = 0,  ⟨S_k,Y⟩ ≥ 0
/// ```
///
/// whose row multipliers are the fit's `(l, p, δ, γ, σ)` up to sign, with
/// `l` shifted by `2Σδᵢbᵢ` because `K_i` carries a `T` component. A fixed
/// `l` is fitted directly. Either way the matrix is rebuilt from the
/// multipliers and its witness checked independently of the solver.
pub fn fit_dual_with(inst: &MbqpInstance, spec: &FitSpec, settings: &SdpSettings) -> Result<DualCertificate> {
    let lift = build_lifting(inst);
    let m = lift.num_rows();
    spec.validate(m)?;
    let fit = match spec.l_mode {
        LMode::Variable => fit_through_relaxation(&lift, spec, settings)?,
        LMode::Fixed(_) => fit_directly(&lift, spec, settings)?,
    };
    let FitMultipliers {
        p,
        delta,
        gamma,
        sigma,
        l,
        nonneg,
    } = fit;
    let split = SplitMultipliers {
        alpha: delta.iter().map(|d| -d).collect(),
        beta: vec![spec.tau; m],
        theta: (0..m).map(|i| 2.0 * delta[i] * lift.rhs[i]).sum::<f64>() + spec.tau - (l + spec.r),
        penalty: p.clone(),
    };
    let provenance = Provenance::Fit {
        p,
        delta,
        gamma: gamma.clone(),
        sigma: sigma.clone(),
        l,
        tau: spec.tau,
        r: spec.r,
    };
    let placeholder = CopositivityVerdict {
        tag: VerdictTag::Undecided,
        proof: None,
        witness: None,
        margin: f64::NAN,
    };
    let d = lift.dim;
    let guess = nonneg.unwrap_or_else(|| DMatrix::zeros(d, d));
    // Squared-row penalties leave the objective at Δb = 0 unchanged, so
    // small uniform bumps are tried when the fitted matrix narrowly fails
    // the SPN check.
    let mut last = None;
    for bump in PENALTY_BUMPS {
        let mut bumped = split.clone();
        for w in bumped.penalty.iter_mut() {
            *w += bump;
        }
        let mut provenance = provenance.clone();
        if let Provenance::Fit { p, .. } = &mut provenance {
            p.clone_from(&bumped.penalty);
        }
        let mut cert = DualCertificate::from_split(
            &lift,
            bumped,
            DVector::from_vec(gamma.clone()),
            sigma.clone(),
            placeholder.clone(),
            provenance,
        )?;
        let verdict = spn_verdict(cert.matrix.clone(), guess.clone(), spec.interior);
        if verdict.is_copositive() {
            cert.verdict = verdict;
            return Ok(cert);
        }
        last = Some(cert);
    }
    let mut cert = last.expect("at least one bump is tried");
    cert.verdict = check_spn_with(&cert.matrix, settings);
    Ok(cert)
}

fn fit_through_relaxation(lift: &Lifting, spec: &FitSpec, settings: &SdpSettings) -> Result<FitMultipliers> {
    let m = lift.num_rows();
    let d = lift.dim;
    let mut sdp = SdpProblem::new();
    let (y, _) = sdp.add_doubly_nonneg_block(d);
    let cost = &lift.objective + &lift.regularizer * spec.tau - &lift.homog * spec.r
        - DMatrix::<f64>::identity(d, d) * spec.interior;
    sdp.set_block_cost(y, cost);
    let t_row = sdp.add_row(matrix_terms(y, &lift.homog), 1.0);
    let penalty_rows: Vec<usize> = (0..m)
        .map(|i| {
            let s = sdp.add_scalar(0.0, f64::INFINITY, 0.0);
            let mut terms = matrix_terms(y, &lift.row_penalty[i]);
            terms.push(Term::Scalar(s, 1.0));
            sdp.add_row(terms, spec.solve_weight(i))
        })
        .collect();
    let linear_rows: Vec<usize> = if spec.use_linear_penalty {
        (0..m)
            .map(|i| sdp.add_row(matrix_terms(y, &lift.row_linear[i]), 2.0 * lift.rhs[i] + spec.w2[i]))
            .collect()
    } else {
        vec![]
    };
    let comp_rows: Vec<usize> = lift
        .complementarity
        .iter()
        .map(|n| sdp.add_row(matrix_terms(y, n), 0.0))
        .collect();
    let mc = if spec.use_mccormick { mccormick_rows(lift) } else { vec![] };
    let mc_rows: Vec<usize> = mc
        .iter()
        .map(|row| {
            let s = sdp.add_scalar(0.0, f64::INFINITY, 0.0);
            let mut terms = matrix_terms(y, &row.matrix);
            terms.push(Term::Scalar(s, -1.0));
            sdp.add_row(terms, 0.0)
        })
        .collect();
    let out = solve_sdp_with(&sdp, settings)?;
    match out.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            return Err(Error::NoCertificate(
                "the fit is unbounded (its dual relaxation is infeasible)".into(),
            ))
        }
        // The multipliers only feed the copositivity check of the rebuilt
        // matrix, so an iteration-limited run is still used.
        SdpStatus::IterLimit => {}
    }
    let dual = |r: usize| out.duals[r];
    let p: Vec<f64> = penalty_rows.iter().map(|&r| (-dual(r)).max(0.0)).collect();
    let delta: Vec<f64> = if linear_rows.is_empty() {
        vec![0.0; m]
    } else {
        linear_rows.iter().map(|&r| dual(r)).collect()
    };
    let gamma: Vec<f64> = comp_rows.iter().map(|&r| -dual(r)).collect();
    let sigma: Vec<f64> = mc_rows.iter().map(|&r| dual(r).max(0.0)).collect();
    let l = dual(t_row) + 2.0 * (0..m).map(|i| delta[i] * lift.rhs[i]).sum::<f64>();
    Ok(FitMultipliers {
        p,
        delta,
        gamma,
        sigma,
        l,
        nonneg: Some(tie_nonneg(&out.duals, d)),
    })
}

fn fit_directly(lift: &Lifting, spec: &FitSpec, settings: &SdpSettings) -> Result<FitMultipliers> {
    let m = lift.num_rows();
    let d = lift.dim;
    let mc = if spec.use_mccormick { mccormick_rows(&lift) } else { vec![] };

    let mut sdp = SdpProblem::new();
    let mut columns: Vec<(usize, &DMatrix<f64>, f64)> = Vec::new();
    let p_vars: Vec<usize> = (0..m).map(|i| sdp.add_scalar(0.0, MULTIPLIER_BOX, spec.solve_weight(i))).collect();
    for i in 0..m {
        columns.push((p_vars[i], &lift.row_penalty[i], 1.0));
    }
    let delta_vars: Vec<usize> = if spec.use_linear_penalty {
        (0..m)
            .map(|i| sdp.add_scalar(-MULTIPLIER_BOX, MULTIPLIER_BOX, -spec.w2[i]))
            .collect()
    } else {
        vec![]
    };
    for (i, &v) in delta_vars.iter().enumerate() {
        columns.push((v, &lift.row_linear_penalty[i], 1.0));
    }
    let gamma_vars: Vec<usize> = (0..lift.binaries.len())
        .map(|_| sdp.add_scalar(-MULTIPLIER_BOX, MULTIPLIER_BOX, 0.0))
        .collect();
    for (j, &v) in gamma_vars.iter().enumerate() {
        columns.push((v, &lift.complementarity[j], 1.0));
    }
    let sigma_vars: Vec<usize> = mc.iter().map(|_| sdp.add_scalar(0.0, MULTIPLIER_BOX, 0.0)).collect();
    for (k, &v) in sigma_vars.iter().enumerate() {
        columns.push((v, &mc[k].matrix, -1.0));
    }
    let mut constant = &lift.objective + &lift.regularizer * spec.tau - &lift.homog * spec.r;
    let l_var = match spec.l_mode {
        LMode::Fixed(l) => {
            constant -= &lift.homog * l;
            None
        }
        LMode::Variable => {
            let v = sdp.add_scalar(-MULTIPLIER_BOX, MULTIPLIER_BOX, -1.0);
            columns.push((v, &lift.homog, -1.0));
            Some(v)
        }
    };
    let psd = sdp.add_block(d, Cone::Psd);
    let nn = sdp.add_block(d, Cone::Nonneg);
    for j in 0..d {
        for i in 0..=j {
            let mut terms = vec![
                Term::Entry { block: psd, i, j, coeff: -1.0 },
                Term::Entry { block: nn, i, j, coeff: -1.0 },
            ];
            for &(v, mat, sign) in &columns {
                let c = mat[(i, j)];
                if c != 0.0 {
                    terms.push(Term::Scalar(v, sign * c));
                }
            }
            let rhs = -constant[(i, j)] + if i == j { spec.interior } else { 0.0 };
            sdp.add_row(terms, rhs);
        }
    }
    let out = solve_sdp_with(&sdp, settings)?;
    if out.status == SdpStatus::Infeasible {
        return Err(Error::NoCertificate("the fitting problem is infeasible".into()));
    }
    let value = |v: usize| out.scalars[v];
    let p: Vec<f64> = p_vars.iter().map(|&v| value(v).max(0.0)).collect();
    let delta: Vec<f64> = if delta_vars.is_empty() {
        vec![0.0; m]
    } else {
        delta_vars.iter().map(|&v| value(v)).collect()
    };
    let gamma: Vec<f64> = gamma_vars.iter().map(|&v| value(v)).collect();
    let sigma: Vec<f64> = sigma_vars.iter().map(|&v| value(v).max(0.0)).collect();
    let l = match spec.l_mode {
        LMode::Fixed(l) => l,
        LMode::Variable => value(l_var.expect("variable l has a column")),
    };
    Ok(FitMultipliers {
        p,
        delta,
        gamma,
        sigma,
        l,
        nonneg: Some(out.blocks[nn].map(|v| v.max(0.0))),
    })
}

/// A certificate's bound at `b + Δb`, flagged when the certificate's
/// copositivity was not established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub value: f64,
    pub verified: bool,
}

pub fn predict(cert: &DualCertificate, delta: &DVector<f64>) -> Result<Prediction> {
    Ok(Prediction {
        value: cert.predict(delta)?,
        verified: cert.is_verified(),
    })
}

/// `predict(Δb) − predict(0)` computed from the multipliers alone:
/// `−Σ2Δbᵢαᵢ − Σ(Δbᵢ² + 2bᵢΔbᵢ)βᵢ`.
pub fn prediction_shift(cert: &DualCertificate, delta: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..delta.len() {
        let d = delta[i];
        s -= 2.0 * d * cert.alpha[i] + (d * d + 2.0 * cert.rhs[i] * d) * cert.beta[i];
    }
    s
}

/// Grid-averaged prediction of a certificate over `Δbᵢ ∈ {0, …, rgᵢ}`,
/// by enumeration.
pub fn mean_prediction(cert: &DualCertificate, rg: &[usize]) -> Result<f64> {
    if rg.len() != cert.rhs.len() {
        return Err(Error::Dimension(format!(
            "range vector has length {}, certificate has {} rows",
            rg.len(),
            cert.rhs.len()
        )));
    }
    let mut delta = DVector::zeros(rg.len());
    let mut total = 0.0;
    let mut count = 0usize;
    loop {
        total += cert.predict(&delta)?;
        count += 1;
        let mut i = 0;
        while i < rg.len() {
            if (delta[i] as usize) < rg[i] {
                delta[i] += 1.0;
                break;
            }
            delta[i] = 0.0;
            i += 1;
        }
        if i == rg.len() {
            break;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapFlag {
    /// `z − p₁` below `10⁻⁹`.
    DegenerateDenominator,
    /// `z < p₁`.
    WeakDualityViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeGap {
    pub value: f64,
    pub flag: Option<GapFlag>,
}

/// `(z − p₂)/(z − p₁)`.
pub fn relative_gap(z_true: f64, p1: f64, p2: f64) -> RelativeGap {
    let den = z_true - p1;
    if den.abs() < 1e-9 {
        return RelativeGap {
            value: f64::NAN,
            flag: Some(GapFlag::DegenerateDenominator),
        };
    }
    RelativeGap {
        value: (z_true - p2) / den,
        flag: (den < 0.0).then_some(GapFlag::WeakDualityViolated),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copositive::dual_objective;
    use crate::model::{to_standard_form, RawConstraint, RawProblem, Relation};

    fn single_edge() -> MbqpInstance {
        to_standard_form(&RawProblem::linear(
            vec![-1.0, -1.0],
            vec![RawConstraint::new(vec![1.0, 1.0], Relation::Le, 1.0)],
            vec![0, 1],
        ))
        .unwrap()
    }

    #[test]
    fn weights() {
        assert_eq!(select_weights(&[3, 0, 1]), (vec![3.5, 0.0, 0.5], vec![3.0, 0.0, 1.0]));
    }

    #[test]
    fn gaps() {
        assert_eq!(relative_gap(5.0, 3.0, 4.0).value, 0.5);
        assert_eq!(relative_gap(5.0, 3.0, 3.0).value, 1.0);
        assert_eq!(relative_gap(5.0, 3.0, 5.0).value, 0.0);
        let g = relative_gap(5.0, 5.0, 4.0);
        assert!(g.value.is_nan() && g.flag == Some(GapFlag::DegenerateDenominator));
        assert_eq!(relative_gap(1.0, 2.0, 0.0).flag, Some(GapFlag::WeakDualityViolated));
    }

    #[test]
    fn shor_on_single_edge() {
        let inst = single_edge();
        let s1 = solve_shor1(&inst).unwrap();
        let s2 = solve_shor2(&inst).unwrap();
        assert!(s1.value <= -2.0 + 1e-5, "{}", s1.value);
        assert!(s2.value >= s1.value - 1e-5);
        let zero = DVector::zeros(inst.num_rows());
        for s in [&s1, &s2] {
            let p = s.predict(&zero).unwrap();
            assert!(s.verified);
            assert!(p <= -2.0 + 1e-9 && p >= -2.0 - 1e-4, "{p}");
        }
    }

    #[test]
    fn fit_fixed_l_single_edge() {
        let inst = single_edge();
        let mut spec = FitSpec::new(inst.num_rows());
        spec.l_mode = LMode::Fixed(-2.0);
        let cert = fit_dual(&inst, &spec).unwrap();
        assert_eq!(cert.verdict.tag, VerdictTag::Copositive);
        let at_zero = cert.predict(&DVector::zeros(3)).unwrap();
        assert!((at_zero + 2.0).abs() < 0.1, "{at_zero}");
        assert!(at_zero <= -2.0 + 1e-4);
    }

    #[test]
    fn aggregation_identity() {
        let b = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let (p, delta, l) = ([0.3, 1.7, 0.0], [-0.2, 0.4, 1.1], 2.5);
        let (tau, r) = (0.01, 0.002);
        let (alpha, beta, theta) = aggregate_fit(&b, &p, &delta, tau, r, l);
        let direct = dual_objective(&b, &alpha, &beta, theta);
        let formula = l + r - tau * (1.0 + b.norm_squared());
        assert!((direct - formula).abs() < 1e-12);
    }
}
