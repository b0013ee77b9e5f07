//! Copositive dual certificates: verification, closed-form synthesis and
//! the weak-duality bound they imply under right-hand-side changes.

mod closed_form;
mod constants;
mod demos;
pub(crate) mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use closed_form::{synthesize_closed_form, ClosedFormMode, ClosedFormOptions};
pub use constants::{compute_hj, compute_k, compute_k_with, compute_pj, compute_rho, compute_uj, RhoInfo};
pub use demos::{
    demo_gap_example, demo_nonattainment, gap_instance, gap_witness_value, stable_set_instance,
    GapReport, GapRow, NonattainmentCandidate, NonattainmentReport, NonattainmentRow,
};
pub use verify::{
    check_partition, check_partition_with, check_spn, check_spn_with, is_valid_witness, refute, simplex_minimum,
    spn_residuals, CopositivityProof, CopositivityVerdict, PartitionOptions, VerdictTag,
};

use crate::error::{Error, Result};
use crate::lift::{mccormick_rows, Lifting};
use crate::model::io::row_major;

/// How a certificate was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Provenance {
    ClosedForm {
        f1: f64,
        f2: f64,
        g: f64,
        r: f64,
        tau: f64,
        l: f64,
        rounds: usize,
        /// Strict-copositivity constant of the regularizer, and whether it
        /// was certified or only estimated.
        k: Option<f64>,
        k_certified: bool,
    },
    Fit {
        p: Vec<f64>,
        delta: Vec<f64>,
        gamma: Vec<f64>,
        sigma: Vec<f64>,
        l: f64,
        tau: f64,
        r: f64,
    },
    Perturbed {
        row: usize,
        base: Box<Provenance>,
    },
    Supplied,
}

/// Multipliers of `M − Σwᵢ·KK_i` together with the penalty weights `w`.
///
/// A unit of `KK_i` contributes `(−bᵢ, 1, bᵢ²)` to `(αᵢ, βᵢ, θ)`, which adds
/// exactly zero to the objective and `−Δbᵢ²` to the prediction. Keeping it
/// apart lets certificates with very large penalties be evaluated without
/// the cancellation the aggregated multipliers would suffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMultipliers {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub theta: f64,
    pub penalty: Vec<f64>,
}

/// A point `(α, β, γ, θ)` of the copositive dual together with
/// `M = C + Σ(αᵢA_i + βᵢAA_i) + Σγ_jN_j + θT − Σσ_kS_k`.
///
/// `σ` multiplies the McCormick inequalities (in [`mccormick_rows`] order)
/// and is empty when they are not used. `alpha`, `beta` and `theta` are the
/// aggregated multipliers; the objective and predictions are evaluated from
/// `split`.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// Right-hand side the certificate was built for.
    pub rhs: DVector<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub theta: f64,
    pub sigma: Vec<f64>,
    pub split: SplitMultipliers,
    pub matrix: DMatrix<f64>,
    pub objective: f64,
    pub verdict: CopositivityVerdict,
    pub provenance: Provenance,
}

/// `−Σ(2bᵢαᵢ + bᵢ²βᵢ) − θ`.
pub fn dual_objective(b: &DVector<f64>, alpha: &DVector<f64>, beta: &DVector<f64>, theta: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..b.len() {
        s += 2.0 * b[i] * alpha[i] + b[i] * b[i] * beta[i];
    }
    -s - theta
}

pub fn assemble_matrix(
    lift: &Lifting,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    theta: f64,
    sigma: &[f64],
) -> Result<DMatrix<f64>> {
    let m = lift.num_rows();
    if alpha.len() != m || beta.len() != m || gamma.len() != lift.binaries.len() {
        return Err(Error::Dimension(format!(
            "certificate has {} alpha, {} beta, {} gamma entries; instance has {} rows and {} binaries",
            alpha.len(),
            beta.len(),
            gamma.len(),
            m,
            lift.binaries.len()
        )));
    }
    let mut out = lift.objective.clone() + &lift.homog * theta;
    for i in 0..m {
        out += &lift.row_linear[i] * alpha[i];
        out += &lift.row_quad[i] * beta[i];
    }
    for (j, n) in lift.complementarity.iter().enumerate() {
        out += n * gamma[j];
    }
    if !sigma.is_empty() {
        let rows = mccormick_rows(lift);
        if rows.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "certificate has {} McCormick multipliers, instance has {} inequalities",
                sigma.len(),
                rows.len()
            )));
        }
        for (row, s) in rows.iter().zip(sigma) {
            out -= &row.matrix * *s;
        }
    }
    Ok(out)
}

fn assemble_split(lift: &Lifting, split: &SplitMultipliers, gamma: &DVector<f64>, sigma: &[f64]) -> Result<DMatrix<f64>> {
    let m = lift.num_rows();
    if split.penalty.len() != m {
        return Err(Error::Dimension(format!(
            "certificate has {} penalty weights, instance has {m} rows",
            split.penalty.len()
        )));
    }
    let mut out = assemble_matrix(
        lift,
        &DVector::from_column_slice(&split.alpha),
        &DVector::from_column_slice(&split.beta),
        gamma,
        split.theta,
        sigma,
    )?;
    for (i, &w) in split.penalty.iter().enumerate() {
        if w != 0.0 {
            out += &lift.row_penalty[i] * w;
        }
    }
    Ok(out)
}

fn split_objective(b: &DVector<f64>, split: &SplitMultipliers, delta: Option<&DVector<f64>>) -> f64 {
    let mut s = -split.theta;
    let mut drop = 0.0;
    for i in 0..b.len() {
        let d = delta.map_or(0.0, |d| d[i]);
        let bi = b[i] + d;
        s -= 2.0 * bi * split.alpha[i] + bi * bi * split.beta[i];
        drop += split.penalty[i] * d * d;
    }
    s - drop
}

impl DualCertificate {
    /// Builds the matrix and objective from aggregated multipliers.
    pub fn new(
        lift: &Lifting,
        alpha: DVector<f64>,
        beta: DVector<f64>,
        gamma: DVector<f64>,
        theta: f64,
        sigma: Vec<f64>,
        verdict: CopositivityVerdict,
        provenance: Provenance,
    ) -> Result<Self> {
        let split = SplitMultipliers {
            alpha: alpha.iter().copied().collect(),
            beta: beta.iter().copied().collect(),
            theta,
            penalty: vec![0.0; lift.num_rows()],
        };
        Self::from_split(lift, split, gamma, sigma, verdict, provenance)
    }

    /// Builds a certificate from multipliers of `M − ΣwᵢKK_i` and the weights.
    pub fn from_split(
        lift: &Lifting,
        split: SplitMultipliers,
        gamma: DVector<f64>,
        sigma: Vec<f64>,
        verdict: CopositivityVerdict,
        provenance: Provenance,
    ) -> Result<Self> {
        let m = lift.num_rows();
        if split.alpha.len() != m || split.beta.len() != m {
            return Err(Error::Dimension(format!(
                "certificate has {} alpha and {} beta entries, instance has {m} rows",
                split.alpha.len(),
                split.beta.len()
            )));
        }
        let matrix = assemble_split(lift, &split, &gamma, &sigma)?;
        let b = &lift.rhs;
        let alpha = DVector::from_fn(m, |i, _| split.alpha[i] - b[i] * split.penalty[i]);
        let beta = DVector::from_fn(m, |i, _| split.beta[i] + split.penalty[i]);
        let theta = split.theta + (0..m).map(|i| b[i] * b[i] * split.penalty[i]).sum::<f64>();
        let objective = split_objective(b, &split, None);
        Ok(DualCertificate {
            rhs: b.clone(),
            alpha,
            beta,
            gamma,
            theta,
            sigma,
            split,
            matrix,
            objective,
            verdict,
            provenance,
        })
    }

    /// Weak-duality bound on `z(b + Δb)`:
    /// `−Σ(2(bᵢ+Δbᵢ)αᵢ + (bᵢ+Δbᵢ)²βᵢ) − θ`.
    pub fn predict(&self, delta: &DVector<f64>) -> Result<f64> {
        if delta.len() != self.rhs.len() {
            return Err(Error::Dimension(format!(
                "Δb has length {}, certificate has {} rows",
                delta.len(),
                self.rhs.len()
            )));
        }
        Ok(split_objective(&self.rhs, &self.split, Some(delta)))
    }

    pub fn is_verified(&self) -> bool {
        self.verdict.is_copositive()
    }

    /// Largest entry of the difference between the stored matrix and the
    /// one rebuilt from the multipliers.
    pub fn matrix_mismatch(&self, lift: &Lifting) -> Result<f64> {
        let rebuilt = assemble_split(lift, &self.split, &self.gamma, &self.sigma)?;
        Ok((&rebuilt - &self.matrix).amax())
    }

    pub fn reverify(&mut self, verdict: CopositivityVerdict) {
        self.verdict = verdict;
    }
}

/// Moves weight from the linear to the squared penalty of row `i`:
/// `(α − bᵢeᵢ, β + eᵢ, γ, θ + bᵢ², M + KK_i)`. The objective is unchanged
/// and the prediction at `Δb` drops by `Δbᵢ²`.
pub fn perturb_certificate(cert: &DualCertificate, lift: &Lifting, i: usize) -> Result<DualCertificate> {
    if i >= cert.rhs.len() {
        return Err(Error::InvalidArgument(format!(
            "row {} out of range (certificate has {} rows)",
            i + 1,
            cert.rhs.len()
        )));
    }
    let bi = cert.rhs[i];
    let mut out = cert.clone();
    out.alpha[i] -= bi;
    out.beta[i] += 1.0;
    out.theta += bi * bi;
    // Into the base multipliers: the penalty weights can be large enough
    // to absorb a unit entirely.
    out.split.alpha[i] -= bi;
    out.split.beta[i] += 1.0;
    out.split.theta += bi * bi;
    out.matrix += &lift.row_penalty[i];
    if let Some(CopositivityProof::Spn { psd, .. }) = &mut out.verdict.proof {
        *psd += &lift.row_penalty[i];
    }
    out.provenance = Provenance::Perturbed {
        row: i,
        base: Box::new(cert.provenance.clone()),
    };
    Ok(out)
}

/// Certificate file layout. Matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Indexed by binary, in the instance's binary order.
    pub gamma: Vec<f64>,
    pub theta: f64,
    pub objective: f64,
    pub verdict: VerdictTag,
    pub provenance: Provenance,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma: Vec<f64>,
    /// Absent in hand-written files, where the aggregated multipliers are
    /// taken as the split with zero penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitMultipliers>,
    pub dim: usize,
    #[serde(rename = "M")]
    pub matrix: Vec<f64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<Vec<f64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, f64>,
}

impl From<&DualCertificate> for CertificateFile {
    fn from(c: &DualCertificate) -> Self {
        let (psd, nonneg) = match &c.verdict.proof {
            Some(CopositivityProof::Spn { psd, nonneg }) => (Some(row_major(psd)), Some(row_major(nonneg))),
            _ => (None, None),
        };
        let mut notes = BTreeMap::new();
        if c.verdict.margin.is_finite() {
            notes.insert("margin".to_string(), c.verdict.margin);
        }
        if let Some(CopositivityProof::Partition { simplices, max_depth }) = &c.verdict.proof {
            notes.insert("partition_simplices".to_string(), *simplices as f64);
            notes.insert("partition_depth".to_string(), *max_depth as f64);
        }
        CertificateFile {
            alpha: c.alpha.iter().copied().collect(),
            beta: c.beta.iter().copied().collect(),
            gamma: c.gamma.iter().copied().collect(),
            theta: c.theta,
            objective: c.objective,
            verdict: c.verdict.tag,
            provenance: c.provenance.clone(),
            b: c.rhs.iter().copied().collect(),
            sigma: c.sigma.clone(),
            split: Some(c.split.clone()),
            dim: c.matrix.nrows(),
            matrix: row_major(&c.matrix),
            psd,
            nonneg,
            notes,
        }
    }
}

impl TryFrom<CertificateFile> for DualCertificate {
    type Error = Error;

    fn try_from(f: CertificateFile) -> Result<Self> {
        let m = f.b.len();
        if f.alpha.len() != m || f.beta.len() != m {
            return Err(Error::Dimension(format!(
                "alpha/beta lengths {}/{} do not match b length {m}",
                f.alpha.len(),
                f.beta.len()
            )));
        }
        let d = f.dim;
        let square = |v: &[f64], name: &str| {
            if v.len() == d * d {
                Ok(DMatrix::from_row_slice(d, d, v))
            } else {
                Err(Error::Dimension(format!("{name} has {} entries, expected {}", v.len(), d * d)))
            }
        };
        let matrix = square(&f.matrix, "M")?;
        let proof = match (&f.psd, &f.nonneg) {
            (Some(p), Some(n)) => Some(CopositivityProof::Spn {
                psd: square(p, "P")?,
                nonneg: square(n, "N")?,
            }),
            _ => None,
        };
        let rhs = DVector::from_vec(f.b);
        let split = f.split.unwrap_or_else(|| SplitMultipliers {
            alpha: f.alpha.clone(),
            beta: f.beta.clone(),
            theta: f.theta,
            penalty: vec![0.0; m],
        });
        if split.alpha.len() != m || split.beta.len() != m || split.penalty.len() != m {
            return Err(Error::Dimension("split multipliers do not match b".into()));
        }
        let recomputed = split_objective(&rhs, &split, None);
        if (recomputed - f.objective).abs() > 1e-10 * (1.0 + recomputed.abs()) {
            return Err(Error::InvalidArgument(format!(
                "stored objective {} disagrees with the multipliers ({recomputed})",
                f.objective
            )));
        }
        Ok(DualCertificate {
            rhs,
            alpha: DVector::from_vec(f.alpha),
            beta: DVector::from_vec(f.beta),
            gamma: DVector::from_vec(f.gamma),
            theta: f.theta,
            sigma: f.sigma,
            split,
            matrix,
            objective: recomputed,
            verdict: CopositivityVerdict {
                tag: f.verdict,
                proof,
                witness: None,
                margin: f.notes.get("margin").copied().unwrap_or(f64::NAN),
            },
            provenance: f.provenance,
        })
    }
}

pub fn write_certificate(cert: &DualCertificate, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&CertificateFile::from(cert))?)?;
    Ok(())
}

pub fn read_certificate(path: &Path) -> Result<DualCertificate> {
    let file: CertificateFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    DualCertificate::try_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::build_lifting;
    use crate::model::generate_comb;

    fn some_certificate() -> (Lifting, DualCertificate) {
        let inst = generate_comb(2, 0.5, 2, 1.0).unwrap();
        let lift = build_lifting(&inst);
        let m = lift.num_rows();
        let alpha = DVector::from_fn(m, |i, _| 0.3 * i as f64 - 1.0);
        let beta = DVector::from_fn(m, |i, _| 1.0 + 0.1 * i as f64);
        let gamma = DVector::from_element(lift.binaries.len(), -0.5);
        let cert = DualCertificate::new(
            &lift,
            alpha,
            beta,
            gamma,
            2.5,
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
        (lift, cert)
    }

    #[test]
    fn prediction_formula() {
        // α = −1, β = 1, θ = 1, b = 1, Δb = 1 gives −(2·2·(−1) + 4) − 1 = −1
        let b = DVector::from_vec(vec![1.0]);
        let v = dual_objective(&(&b + DVector::from_vec(vec![1.0])), &DVector::from_vec(vec![-1.0]), &DVector::from_vec(vec![1.0]), 1.0);
        assert_eq!(v, -1.0);
    }

    #[test]
    fn perturbation_keeps_objective() {
        let (lift, cert) = some_certificate();
        for i in 0..lift.num_rows() {
            let moved = perturb_certificate(&cert, &lift, i).unwrap();
            assert!((moved.objective - cert.objective).abs() < 1e-10);
            assert!(moved.matrix_mismatch(&lift).unwrap() < 1e-9);
            let mut delta = DVector::zeros(lift.num_rows());
            delta[i] = 1.7;
            let drop = cert.predict(&delta).unwrap() - moved.predict(&delta).unwrap();
            assert!((drop - 1.7 * 1.7).abs() < 1e-9);
        }
    }

    #[test]
    fn file_round_trip() {
        let (_, cert) = some_certificate();
        let text = serde_json::to_string(&CertificateFile::from(&cert)).unwrap();
        let back = DualCertificate::try_from(serde_json::from_str::<CertificateFile>(&text).unwrap()).unwrap();
        assert_eq!(back.alpha, cert.alpha);
        assert_eq!(back.matrix, cert.matrix);
        assert_eq!(back.objective, cert.objective);
        assert_eq!(back.provenance, cert.provenance);
    }
}
