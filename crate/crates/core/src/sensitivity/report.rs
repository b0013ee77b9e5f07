//! Per-instance evaluation of every method over a grid of right-hand-side
//! changes, and the report tables.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{
    cont_bound, fit_dual_with, relative_gap, select_weights, solve_shor_with, FitSpec, GapFlag, LMode, Method,
};
use crate::copositive::{synthesize_closed_form, ClosedFormMode, ClosedFormOptions};
use crate::error::{Error, Result};
use crate::copositive::verify::spn_defect;
use crate::exact::{is_bounded, mass_bound, solve_exact, ExactStatus, DEFAULT_NODE_BUDGET};
use crate::model::MbqpInstance;
use crate::sdp::SdpSettings;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub methods: Vec<Method>,
    /// Solve every shifted instance exactly.
    pub ground_truth: bool,
    pub exact_budget: usize,
    /// `ε₀` and `r` of the closed-form certificate, built for `l = z(b)`.
    pub eps0: f64,
    pub r: f64,
    pub closed_form: ClosedFormOptions,
    /// Template for the fit; weights are replaced by [`select_weights`] of
    /// the grid's per-row range.
    pub fit: FitSpec,
    /// Settings of the Shor relaxations.
    pub sdp: SdpSettings,
    pub fit_sdp: SdpSettings,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            methods: Method::ALL.to_vec(),
            ground_truth: true,
            exact_budget: DEFAULT_NODE_BUDGET,
            eps0: 1e-3,
            r: 1e-3,
            closed_form: ClosedFormOptions {
                max_rounds: 2,
                ..ClosedFormOptions::default()
            },
            fit: FitSpec::new(0),
            sdp: super::relaxation_settings(),
            fit_sdp: super::fit_settings(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub instance: String,
    pub delta: Vec<f64>,
    pub status: ExactStatus,
    /// Present when the shifted instance was solved to optimality.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub instance: String,
    pub method: Method,
    pub delta: Vec<f64>,
    pub prediction: Option<f64>,
    /// False when the method's certificate was not verified copositive.
    pub verified: bool,
    pub z_true: Option<f64>,
    /// Relative gap against Shor1 at the same `Δb`.
    pub rel_gap: Option<f64>,
    pub gap_flag: Option<GapFlag>,
    /// Time to build the method's bound, shared by all its rows.
    pub time_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SensitivityReport {
    pub truth: Vec<GroundTruth>,
    pub rows: Vec<ReportRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_delta(d: &[f64]) -> String {
    d.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

impl SensitivityReport {
    pub fn extend(&mut self, other: SensitivityReport) {
        self.truth.extend(other.truth);
        self.rows.extend(other.rows);
    }

    /// Prediction rows without timings; identical inputs give identical text.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,method,delta,prediction,z_true,rel_gap,verified,error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.instance,
                r.method.name(),
                fmt_delta(&r.delta),
                fmt_opt(r.prediction),
                fmt_opt(r.z_true),
                fmt_opt(r.rel_gap),
                r.verified,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
            );
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("instance,method,time_ms\n");
        let mut last: Option<(&str, Method)> = None;
        for r in &self.rows {
            if last == Some((r.instance.as_str(), r.method)) {
                continue;
            }
            last = Some((r.instance.as_str(), r.method));
            let _ = writeln!(out, "{},{},{:.3}", r.instance, r.method.name(), r.time_ms);
        }
        out
    }

    /// Rows whose prediction exceeds the ground truth by more than `tol`.
    pub fn weak_duality_violations(&self, tol: f64) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| matches!((r.prediction, r.z_true), (Some(p), Some(z)) if p > z + tol))
            .collect()
    }

    /// Mean relative gap of `method` at each distinct `Δb`, over rows with a
    /// finite gap.
    pub fn mean_gap_by_delta(&self, method: Method) -> Vec<(Vec<f64>, f64, usize)> {
        let mut groups: Vec<(Vec<f64>, f64, usize)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            let Some(g) = r.rel_gap.filter(|g| g.is_finite()) else {
                continue;
            };
            match groups.iter_mut().find(|(d, _, _)| *d == r.delta) {
                Some(entry) => {
                    entry.1 += g;
                    entry.2 += 1;
                }
                None => groups.push((r.delta.clone(), g, 1)),
            }
        }
        groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        groups.into_iter().map(|(d, s, c)| (d, s / c as f64, c)).collect()
    }
}

/// Largest entry of each row over the grid, rounded up, as weight ranges.
fn grid_ranges(grid: &[DVector<f64>], rows: usize) -> Vec<usize> {
    (0..rows)
        .map(|i| grid.iter().map(|d| d[i].max(0.0).ceil() as usize).max().unwrap_or(0))
        .collect()
}

type Predictor = Box<dyn Fn(&DVector<f64>) -> Result<f64>>;

fn build_method(
    method: Method,
    inst: &MbqpInstance,
    base: Option<f64>,
    grid: &[DVector<f64>],
    opts: &EvalOptions,
) -> Result<(Predictor, bool)> {
    match method {
        Method::Shor1 | Method::Shor2 => {
            let b = solve_shor_with(inst, method == Method::Shor2, &opts.sdp)?;
            let verified = b.verified;
            Ok((Box::new(move |d| b.predict(d)), verified))
        }
        Method::Cont => {
            let b = cont_bound(inst)?;
            let verified = b.verified;
            Ok((Box::new(move |d| b.predict(d)), verified))
        }
        Method::ClosedForm => {
            let l = base.ok_or_else(|| {
                Error::InvalidArgument("closed-form certificate needs the exact optimum at Δb = 0".into())
            })?;
            let mode = if is_bounded(inst)? {
                ClosedFormMode::Bounded
            } else {
                ClosedFormMode::PsdUnbounded
            };
            let cert = synthesize_closed_form(inst, l, opts.eps0, opts.r, mode, &opts.closed_form)?;
            let verified = cert.is_verified();
            Ok((Box::new(move |d| cert.predict(d)), verified))
        }
        Method::FitDual => {
            let m = inst.num_rows();
            let mut spec = opts.fit.clone();
            if spec.w1.len() != m {
                spec = spec.with_weights(select_weights(&grid_ranges(grid, m)));
            }
            if let LMode::Fixed(_) = spec.l_mode {
                if let Some(l) = base {
                    spec.l_mode = LMode::Fixed(l);
                }
            }
            let cert = fit_dual_with(inst, &spec, &opts.fit_sdp)?;
            if cert.is_verified() {
                return Ok((Box::new(move |d| cert.predict(d)), true));
            }
            // Charge the distance from S₊ + S_P as for the relaxations.
            let defect = spn_defect(&cert.matrix, DMatrix::zeros(cert.matrix.nrows(), cert.matrix.nrows()));
            let bounded = mass_bound(&inst.constraints, &inst.rhs)?.is_some();
            let (constraints, rhs) = (inst.constraints.clone(), inst.rhs.clone());
            let predict = move |d: &DVector<f64>| -> Result<f64> {
                let base = cert.predict(d)?;
                let mass = mass_bound(&constraints, &(&rhs + d))?
                    .ok_or_else(|| Error::NoCertificate("unverified certificate on an unbounded set".into()))?;
                Ok(base - defect * (1.0 + mass).powi(2))
            };
            Ok((Box::new(predict), bounded))
        }
    }
}

/// Ground truth and every requested method at each `Δb` of the grid.
///
/// Failures are recorded in the rows and do not stop the evaluation.
pub fn evaluate_instance(id: &str, inst: &MbqpInstance, grid: &[DVector<f64>], opts: &EvalOptions) -> SensitivityReport {
    let m = inst.num_rows();
    let mut report = SensitivityReport::default();
    let grid: Vec<DVector<f64>> = grid.iter().filter(|d| d.len() == m).cloned().collect();

    let solve_at = |d: &DVector<f64>| -> (ExactStatus, Option<f64>) {
        match inst.with_rhs_shift(d).and_then(|s| solve_exact(&s, opts.exact_budget)) {
            Ok(r) if r.is_optimal() => (r.status, Some(r.value)),
            Ok(r) => (r.status, None),
            Err(_) => (ExactStatus::BudgetExceeded, None),
        }
    };
    let needs_base = opts.ground_truth
        || opts.methods.contains(&Method::ClosedForm)
        || (opts.methods.contains(&Method::FitDual) && matches!(opts.fit.l_mode, LMode::Fixed(_)));
    let base = if needs_base { solve_at(&DVector::zeros(m)).1 } else { None };
    let truth: Vec<Option<f64>> = if opts.ground_truth {
        grid.iter()
            .map(|d| {
                let (status, value) = solve_at(d);
                report.truth.push(GroundTruth {
                    instance: id.to_string(),
                    delta: d.iter().copied().collect(),
                    status,
                    value,
                });
                value
            })
            .collect()
    } else {
        vec![None; grid.len()]
    };

    let mut shor1: Vec<Option<f64>> = vec![None; grid.len()];
    let mut methods = opts.methods.clone();
    methods.sort();
    methods.dedup();
    for method in methods {
        let start = Instant::now();
        let built = build_method(method, inst, base, &grid, opts);
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        for (k, d) in grid.iter().enumerate() {
            let (prediction, verified, error) = match &built {
                Ok((f, verified)) => match f(d) {
                    Ok(p) => (Some(p), *verified, None),
                    Err(e) => (None, false, Some(e.to_string())),
                },
                Err(e) => (None, false, Some(e.to_string())),
            };
            if method == Method::Shor1 {
                shor1[k] = prediction;
            }
            let gap = match (truth[k], shor1[k], prediction) {
                (Some(z), Some(p1), Some(p2)) => Some(relative_gap(z, p1, p2)),
                _ => None,
            };
            report.rows.push(ReportRow {
                instance: id.to_string(),
                method,
                delta: d.iter().copied().collect(),
                prediction,
                verified,
                z_true: truth[k],
                rel_gap: gap.map(|g| g.value),
                gap_flag: gap.and_then(|g| g.flag),
                time_ms,
                error,
            });
        }
    }
    report
}
