//! Copositivity tests: an SDP inner approximation, a witness search on the
//! simplex, and simplicial partition.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{min_eigenvalue, project_psd, sym_eigen};
use crate::sdp::{solve_sdp_with, Cone, SdpProblem, SdpSettings, Term};

const WITNESS_LEVEL: f64 = -1e-9;
/// Witness threshold for `yᵀMy` on the simplex, lowered by the rounding
/// error of evaluating the form so that noise on huge entries is not a witness.
fn witness_level(m: &DMatrix<f64>) -> f64 {
    WITNESS_LEVEL - 64.0 * f64::EPSILON * m.amax()
}

const REFUTE_SEED: u64 = 0x5eed_c0de;
const REFUTE_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VerdictTag {
    Copositive,
    NotCopositive,
    Undecided,
}

#[derive(Debug, Clone)]
pub enum CopositivityProof {
    /// `M = P + N` with `P` PSD and `N` entrywise nonnegative.
    Spn { psd: DMatrix<f64>, nonneg: DMatrix<f64> },
    /// Every leaf of a simplicial partition had a nonnegative vertex Gram
    /// matrix.
    Partition { simplices: usize, max_depth: usize },
}

#[derive(Debug, Clone)]
pub struct CopositivityVerdict {
    pub tag: VerdictTag,
    pub proof: Option<CopositivityProof>,
    /// Point of the unit simplex with `yᵀMy < 0`.
    pub witness: Option<DVector<f64>>,
    /// Smallest value seen: the least Gram entry over examined simplices,
    /// or the least `yᵀMy` found by a witness search.
    pub margin: f64,
}

impl CopositivityVerdict {
    fn undecided(margin: f64) -> Self {
        CopositivityVerdict {
            tag: VerdictTag::Undecided,
            proof: None,
            witness: None,
            margin,
        }
    }

    fn witness(y: DVector<f64>, value: f64) -> Self {
        CopositivityVerdict {
            tag: VerdictTag::NotCopositive,
            proof: None,
            witness: Some(y),
            margin: value,
        }
    }

    pub fn is_copositive(&self) -> bool {
        self.tag == VerdictTag::Copositive
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Searches for `M = P + N` with `P` PSD and `N ≥ 0`. The SDP maximizes the
/// shift `s` in `M/‖M‖ = P + sI + N`; a nonnegative optimum is repaired into
/// an exact split by alternating projections. Never reports a witness.
pub fn check_spn(m: &DMatrix<f64>) -> CopositivityVerdict {
    check_spn_with(m, &SdpSettings::default())
}

pub fn check_spn_with(m: &DMatrix<f64>, settings: &SdpSettings) -> CopositivityVerdict {
    let m = symmetric_part(m);
    let d = m.nrows();
    let scale = m.norm();
    if scale == 0.0 {
        return CopositivityVerdict {
            tag: VerdictTag::Copositive,
            proof: Some(CopositivityProof::Spn {
                psd: DMatrix::zeros(d, d),
                nonneg: DMatrix::zeros(d, d),
            }),
            witness: None,
            margin: 0.0,
        };
    }
    if min_eigenvalue(&m) >= 0.0 {
        return spn_verdict(m.clone(), DMatrix::zeros(d, d), 0.0);
    }
    let target = &m / scale;
    let mut sdp = SdpProblem::new();
    let shift = sdp.add_scalar(-1.0, 1.0, -1.0);
    let psd = sdp.add_block(d, Cone::Psd);
    let nn = sdp.add_block(d, Cone::Nonneg);
    for j in 0..d {
        for i in 0..=j {
            let mut terms = vec![
                Term::Entry { block: psd, i, j, coeff: 1.0 },
                Term::Entry { block: nn, i, j, coeff: 1.0 },
            ];
            if i == j {
                terms.push(Term::Scalar(shift, 1.0));
            }
            sdp.add_row(terms, target[(i, j)]);
        }
    }
    let Ok(out) = solve_sdp_with(&sdp, settings) else {
        return CopositivityVerdict::undecided(f64::NAN);
    };
    let s = out.scalars[shift];
    if !out.is_optimal() || s < -1e-6 {
        return CopositivityVerdict::undecided(s * scale);
    }
    let nonneg = out.blocks[nn].map(|v| v.max(0.0)) * scale;
    spn_verdict(m, nonneg, s * scale)
}

/// Alternating projections from a nonnegative guess; accepts when the
/// remainder `M − P` is entrywise nonnegative up to rounding.
pub(crate) fn spn_verdict(m: DMatrix<f64>, guess: DMatrix<f64>, margin: f64) -> CopositivityVerdict {
    let scale = m.amax().max(1.0);
    let mut nonneg = guess;
    for _ in 0..50 {
        let psd = project_psd(&(&m - &nonneg));
        let rest = &m - &psd;
        let low = rest.min();
        if low >= -1e-10 * scale && min_eigenvalue(&psd) >= -1e-8 * scale {
            return CopositivityVerdict {
                tag: VerdictTag::Copositive,
                proof: Some(CopositivityProof::Spn {
                    psd,
                    nonneg: rest.map(|v| v.max(0.0)),
                }),
                witness: None,
                margin,
            };
        }
        nonneg = rest.map(|v| v.max(0.0));
    }
    CopositivityVerdict::undecided(margin)
}

/// Smallest `ε ≥ 0` found with `m = P + N`, `P` PSD and every entry of `N`
/// at least `−ε`, by alternating projections started from `guess`.
pub(crate) fn spn_defect(m: &DMatrix<f64>, guess: DMatrix<f64>) -> f64 {
    let mut nonneg = guess;
    let mut best = f64::INFINITY;
    for _ in 0..50 {
        let rest = m - project_psd(&(m - &nonneg));
        best = best.min((-rest.min()).max(0.0));
        if best == 0.0 {
            break;
        }
        nonneg = rest.map(|v| v.max(0.0));
    }
    best
}

/// Euclidean projection onto the unit simplex.
pub(crate) fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    v.map(|x| (x - shift).max(0.0))
}

/// Multistart projected gradient on `min yᵀMy` over the unit simplex,
/// plus a scan of all vertices and edges. Never certifies copositivity.
pub fn refute(m: &DMatrix<f64>, restarts: usize) -> CopositivityVerdict {
    let m = symmetric_part(m);
    let d = m.nrows();
    if d == 0 {
        return CopositivityVerdict::undecided(f64::INFINITY);
    }
    let mut best_val = f64::INFINITY;
    let mut best_y = DVector::zeros(d);
    let mut offer = |y: DVector<f64>, val: f64| {
        if val < best_val {
            best_val = val;
            best_y = y;
        }
    };
    for i in 0..d {
        let mut y = DVector::zeros(d);
        y[i] = 1.0;
        offer(y, m[(i, i)]);
        for j in i + 1..d {
            let (a, b, c) = (m[(i, i)], m[(j, j)], m[(i, j)]);
            // f(t) = t²a + 2t(1−t)c + (1−t)²b
            let q = a - 2.0 * c + b;
            let mut ts = vec![0.0, 1.0];
            if q > 0.0 {
                ts.push(((b - c) / q).clamp(0.0, 1.0));
            }
            for t in ts {
                let val = t * t * a + 2.0 * t * (1.0 - t) * c + (1.0 - t) * (1.0 - t) * b;
                let mut y = DVector::zeros(d);
                y[i] = t;
                y[j] = 1.0 - t;
                offer(y, val);
            }
        }
    }
    let lipschitz = match sym_eigen(&m) {
        Ok(e) => 2.0 * e.values.amax(),
        Err(_) => 2.0 * m.norm(),
    };
    if lipschitz > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(REFUTE_SEED);
        for _ in 0..restarts {
            let mut y = DVector::from_fn(d, |_, _| -(1.0 - rng.random::<f64>()).ln());
            y /= y.sum();
            for _ in 0..REFUTE_ITERS {
                let grad = &m * &y * 2.0;
                y = project_simplex(&(&y - grad / lipschitz));
            }
            let val = y.dot(&(&m * &y));
            offer(y, val);
        }
    }
    if best_val < witness_level(&m) {
        CopositivityVerdict::witness(best_y, best_val)
    } else {
        CopositivityVerdict::undecided(best_val)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PartitionOptions {
    /// Maximum number of bisections along any branch.
    pub max_depth: usize,
    /// Leaf acceptance: Gram entries `≥ −tol` after diagonal equilibration.
    pub tol: f64,
    /// Cap on the number of simplices examined.
    pub max_simplices: usize,
    /// Simplices with at most this many vertices are also tested exactly by
    /// enumerating the stationary points of every face.
    pub face_enumeration: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            max_depth: 24,
            tol: 1e-8,
            max_simplices: 2_000_000,
            face_enumeration: 12,
        }
    }
}

/// Minimum of `λᵀGλ` over the unit simplex and a minimizer.
///
/// The minimum is attained in the relative interior of some face `S`,
/// where `G_SS λ = μ1, 1ᵀλ = 1` and the value is `μ`. Faces whose bordered
/// system is singular are skipped; the argument that their minimizers
/// extend to a smaller face covers them.
pub fn simplex_minimum(g: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let k = g.nrows();
    let mut best = f64::INFINITY;
    let mut arg = DVector::zeros(k);
    for mask in 1u32..(1u32 << k) {
        let idx: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = g[(i, j)];
            }
            kkt[(a, s)] = -1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) || (0..s).any(|a| sol[a] <= 0.0) {
            continue;
        }
        let mut lam = DVector::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            lam[i] = sol[a];
        }
        let value = lam.dot(&(g * &lam));
        if value < best {
            best = value;
            arg = lam;
        }
    }
    (best, arg)
}

pub fn check_partition(m: &DMatrix<f64>) -> CopositivityVerdict {
    check_partition_with(m, &PartitionOptions::default())
}

struct Simplex {
    vertices: Vec<DVector<f64>>,
    gram: DMatrix<f64>,
    depth: usize,
}

/// Simplicial partition of the standard simplex with longest-edge
/// bisection. The matrix is first scaled to unit diagonal where the
/// diagonal is positive, which preserves copositivity.
pub fn check_partition_with(m: &DMatrix<f64>, opts: &PartitionOptions) -> CopositivityVerdict {
    let m = symmetric_part(m);
    let d = m.nrows();
    if d == 0 {
        return CopositivityVerdict {
            tag: VerdictTag::Copositive,
            proof: Some(CopositivityProof::Partition { simplices: 0, max_depth: 0 }),
            witness: None,
            margin: f64::INFINITY,
        };
    }
    for i in 0..d {
        if m[(i, i)] < WITNESS_LEVEL {
            let mut y = DVector::zeros(d);
            y[i] = 1.0;
            return CopositivityVerdict::witness(y, m[(i, i)]);
        }
    }
    let scale = DVector::from_fn(d, |i, _| {
        if m[(i, i)] > 0.0 {
            1.0 / m[(i, i)].sqrt()
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(d, d, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let level = witness_level(&m);
    // A witness y for the scaled matrix maps back to Dy for the original.
    let unscale = |y: &DVector<f64>| {
        let mut x = y.component_mul(&scale);
        x /= x.sum();
        let val = x.dot(&(&m * &x));
        (x, val)
    };

    let root = Simplex {
        vertices: (0..d)
            .map(|i| {
                let mut e = DVector::zeros(d);
                e[i] = 1.0;
                e
            })
            .collect(),
        gram: scaled.clone(),
        depth: 0,
    };
    let mut stack = vec![root];
    let mut examined = 0usize;
    let mut margin = f64::INFINITY;
    let mut deepest = 0usize;
    let mut capped = false;
    while let Some(s) = stack.pop() {
        examined += 1;
        deepest = deepest.max(s.depth);
        let low = s.gram.min();
        if low >= -opts.tol {
            margin = margin.min(low);
            continue;
        }
        if s.vertices.len() <= opts.face_enumeration {
            let (low_exact, lam) = simplex_minimum(&s.gram);
            if low_exact >= -opts.tol {
                margin = margin.min(low_exact);
                continue;
            }
            let point = s
                .vertices
                .iter()
                .zip(lam.iter())
                .fold(DVector::zeros(d), |acc, (v, &w)| acc + v * w);
            let (x, val) = unscale(&point);
            if val < level {
                return CopositivityVerdict::witness(x, val);
            }
        }
        if s.depth >= opts.max_depth || examined >= opts.max_simplices {
            margin = margin.min(low);
            capped = true;
            if examined >= opts.max_simplices {
                break;
            }
            continue;
        }
        let k = s.vertices.len();
        let (mut a, mut b, mut longest) = (0, 1, -1.0);
        for i in 0..k {
            for j in i + 1..k {
                let len = (&s.vertices[i] - &s.vertices[j]).norm_squared();
                if len > longest {
                    longest = len;
                    a = i;
                    b = j;
                }
            }
        }
        let mid = (&s.vertices[a] + &s.vertices[b]) * 0.5;
        let g = &s.gram;
        let mid_self = 0.25 * (g[(a, a)] + 2.0 * g[(a, b)] + g[(b, b)]);
        if mid_self < WITNESS_LEVEL {
            let (x, val) = unscale(&mid);
            if val < level {
                return CopositivityVerdict::witness(x, val);
            }
        }
        let cross: Vec<f64> = (0..k).map(|t| 0.5 * (g[(t, a)] + g[(t, b)])).collect();
        for replaced in [a, b] {
            let mut gram = g.clone();
            for t in 0..k {
                let v = if t == replaced { mid_self } else { cross[t] };
                gram[(replaced, t)] = v;
                gram[(t, replaced)] = v;
            }
            let mut vertices = s.vertices.clone();
            vertices[replaced] = mid.clone();
            stack.push(Simplex {
                vertices,
                gram,
                depth: s.depth + 1,
            });
        }
    }
    if capped {
        CopositivityVerdict::undecided(margin)
    } else {
        CopositivityVerdict {
            tag: VerdictTag::Copositive,
            proof: Some(CopositivityProof::Partition {
                simplices: examined,
                max_depth: deepest,
            }),
            witness: None,
            margin,
        }
    }
}

/// True when `yᵀMy ≤ −1e−9` (less the rounding error of the form) for a
/// nonnegative `y` on the unit simplex.
pub fn is_valid_witness(m: &DMatrix<f64>, y: &DVector<f64>) -> bool {
    y.len() == m.nrows()
        && y.iter().all(|&v| v >= 0.0)
        && (y.sum() - 1.0).abs() <= 1e-9
        && y.dot(&(m * y)) <= witness_level(m)
}

/// `‖M − P − N‖_F` together with `λ_min(P)` and `min N` for an SPN proof.
pub fn spn_residuals(m: &DMatrix<f64>, psd: &DMatrix<f64>, nonneg: &DMatrix<f64>) -> (f64, f64, f64) {
    (
        (m - psd - nonneg).norm(),
        min_eigenvalue(psd),
        nonneg.min(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horn() -> DMatrix<f64> {
        let mut h = DMatrix::from_element(5, 5, 1.0);
        for i in 0..5 {
            h[(i, (i + 1) % 5)] = -1.0;
            h[((i + 1) % 5, i)] = -1.0;
        }
        h
    }

    #[test]
    fn identity_is_spn() {
        let v = check_spn(&DMatrix::identity(3, 3));
        assert!(v.is_copositive());
        let Some(CopositivityProof::Spn { psd, nonneg }) = &v.proof else {
            panic!("expected SPN proof")
        };
        let (res, eig, low) = spn_residuals(&DMatrix::identity(3, 3), psd, nonneg);
        assert!(res <= 1e-6 && eig >= -1e-8 && low >= -1e-10);
    }

    #[test]
    fn indefinite_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert_eq!(check_spn(&m).tag, VerdictTag::Undecided);
        let r = refute(&m, 64);
        assert_eq!(r.tag, VerdictTag::NotCopositive);
        assert!(is_valid_witness(&m, r.witness.as_ref().unwrap()));
        assert_eq!(check_partition(&m).tag, VerdictTag::NotCopositive);
    }

    #[test]
    fn negative_identity_witness() {
        let r = refute(&-DMatrix::<f64>::identity(3, 3), 8);
        assert_eq!(r.tag, VerdictTag::NotCopositive);
        assert!((r.margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn psd_not_refuted() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert_eq!(refute(&a, 16).tag, VerdictTag::Undecided);
    }

    #[test]
    fn horn_needs_partition() {
        let h = horn();
        assert_eq!(check_spn(&h).tag, VerdictTag::Undecided);
        assert!(check_partition(&h).is_copositive());
        assert_eq!(refute(&h, 64).tag, VerdictTag::Undecided);
    }

    #[test]
    fn complementarity_core_witness() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 2.0]);
        let v = check_partition(&m);
        assert_eq!(v.tag, VerdictTag::NotCopositive);
        assert!(is_valid_witness(&m, v.witness.as_ref().unwrap()));
    }

    #[test]
    fn zero_matrix() {
        assert!(check_partition(&DMatrix::zeros(4, 4)).is_copositive());
        assert!(check_spn(&DMatrix::zeros(4, 4)).is_copositive());
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&DVector::from_vec(vec![2.0, 0.0, -1.0]));
        assert_eq!(p, DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let q = project_simplex(&DVector::from_vec(vec![0.5, 0.5, 0.5]));
        assert!((q.sum() - 1.0).abs() < 1e-15);
    }
}
