//! Python bindings: instances, exact solves, certificates and their
//! predictions, the relaxation bounds and the copositivity tests.

use std::path::PathBuf;

use copsense::copositive::{
    check_partition, check_spn, perturb_certificate, read_certificate, refute, synthesize_closed_form,
    write_certificate, ClosedFormMode, ClosedFormOptions, CopositivityVerdict, DualCertificate, VerdictTag,
};
use copsense::exact::{chromatic_index as chromatic, is_bounded, solve_exact, ChromaticIndex, DEFAULT_NODE_BUDGET};
use copsense::lift::build_lifting;
use copsense::model::{
    generate_comb, generate_sslp, generate_ssqp, read_instance, reduce_edge_coloring, write_instance, Graph,
    MbqpInstance,
};
use copsense::sensitivity::{
    fit_dual, relative_gap as gap, select_weights as weights, solve_shor1, solve_shor2, FitSpec, RelaxationBound,
};
use copsense::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Square matrix from nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(format!("expected {d} entries in every row")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn verdict_name(v: &CopositivityVerdict) -> &'static str {
    match v.tag {
        VerdictTag::Copositive => "Copositive",
        VerdictTag::NotCopositive => "NotCopositive",
        VerdictTag::Undecided => "Undecided",
    }
}

/// Standard-form mixed binary quadratic program.
#[pyclass(name = "Instance", module = "copsense_py")]
pub struct PyInstance {
    inner: MbqpInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    #[pyo3(signature = (seed, density, v=5, p=2.0))]
    fn comb(seed: u64, density: f64, v: usize, p: f64) -> PyResult<Self> {
        Ok(PyInstance {
            inner: generate_comb(seed, density, v, p).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, density, n=6, m=2))]
    fn sslp(seed: u64, density: f64, n: usize, m: usize) -> PyResult<Self> {
        Ok(PyInstance {
            inner: generate_sslp(seed, density, n, m).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, density, n=6, m=2))]
    fn ssqp(seed: u64, density: f64, n: usize, m: usize) -> PyResult<Self> {
        Ok(PyInstance {
            inner: generate_ssqp(seed, density, n, m).map_err(to_py)?,
        })
    }

    /// Edge-coloring program of a graph given as 0-based edges.
    #[staticmethod]
    #[pyo3(signature = (num_vertices, edges, colors, rhs=0.0))]
    fn edge_coloring(num_vertices: usize, edges: Vec<(usize, usize)>, colors: usize, rhs: f64) -> PyResult<Self> {
        let g = Graph::new(num_vertices, &edges).map_err(to_py)?;
        Ok(PyInstance {
            inner: reduce_edge_coloring(&g, colors, rhs).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyInstance {
            inner: read_instance(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_instance(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    #[getter]
    fn num_rows(&self) -> usize {
        self.inner.num_rows()
    }

    #[getter]
    fn rhs(&self) -> Vec<f64> {
        self.inner.rhs.iter().copied().collect()
    }

    #[getter]
    fn binaries(&self) -> Vec<usize> {
        self.inner.binaries.clone()
    }

    /// Standard-form row of raw constraint `raw`.
    fn constraint_row(&self, raw: usize) -> Option<usize> {
        self.inner.constraint_row(raw)
    }

    fn shifted(&self, delta: Vec<f64>) -> PyResult<Self> {
        Ok(PyInstance {
            inner: self.inner.with_rhs_shift(&DVector::from_vec(delta)).map_err(to_py)?,
        })
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.num_vars() {
            return Err(PyValueError::new_err("point has the wrong length"));
        }
        Ok(self.inner.objective(&DVector::from_vec(x)))
    }

    /// Exact optimum as `(status, value, x)`.
    #[pyo3(signature = (budget=DEFAULT_NODE_BUDGET))]
    fn solve(&self, budget: usize) -> PyResult<(String, f64, Option<Vec<f64>>)> {
        let r = solve_exact(&self.inner, budget).map_err(to_py)?;
        Ok((
            format!("{:?}", r.status),
            r.value,
            r.x.map(|x| x.iter().copied().collect()),
        ))
    }

    /// Lifted objective matrix, as nested rows.
    fn lifted_objective(&self) -> Vec<Vec<f64>> {
        let m = build_lifting(&self.inner).objective;
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Instance(vars={}, rows={})", self.inner.num_vars(), self.inner.num_rows())
    }
}

/// Copositive dual certificate.
#[pyclass(name = "Certificate", module = "copsense_py")]
pub struct PyCertificate {
    inner: DualCertificate,
}

#[pymethods]
impl PyCertificate {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyCertificate {
            inner: read_certificate(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_certificate(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.iter().copied().collect()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.iter().copied().collect()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn verdict(&self) -> &'static str {
        verdict_name(&self.inner.verdict)
    }

    #[getter]
    fn verified(&self) -> bool {
        self.inner.is_verified()
    }

    /// Bound at `b + delta`; zero change when omitted.
    #[pyo3(signature = (delta=None))]
    fn predict(&self, delta: Option<Vec<f64>>) -> PyResult<f64> {
        let d = delta.map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(self.inner.rhs.len()));
        self.inner.predict(&d).map_err(to_py)
    }

    /// Certificate with one extra unit of squared penalty on row `row`.
    fn perturb(&self, instance: &PyInstance, row: usize) -> PyResult<Self> {
        let lift = build_lifting(&instance.inner);
        Ok(PyCertificate {
            inner: perturb_certificate(&self.inner, &lift, row).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Certificate(objective={}, verdict={})", self.inner.objective, self.verdict())
    }
}

/// Bound of a Shor relaxation as a function of the right-hand side.
#[pyclass(name = "RelaxationBound", module = "copsense_py")]
pub struct PyRelaxation {
    inner: RelaxationBound,
}

#[pymethods]
impl PyRelaxation {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn verified(&self) -> bool {
        self.inner.verified
    }

    #[pyo3(signature = (delta=None))]
    fn predict(&self, delta: Option<Vec<f64>>) -> PyResult<f64> {
        let d = delta.map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(self.inner.rhs.len()));
        self.inner.predict(&d).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (instance, l, eps0=1e-3, r=1e-3, rounds=40))]
fn closed_form(instance: &PyInstance, l: f64, eps0: f64, r: f64, rounds: usize) -> PyResult<PyCertificate> {
    let inst = &instance.inner;
    let mode = if is_bounded(inst).map_err(to_py)? {
        ClosedFormMode::Bounded
    } else {
        ClosedFormMode::PsdUnbounded
    };
    let opts = ClosedFormOptions {
        max_rounds: rounds,
        ..ClosedFormOptions::default()
    };
    Ok(PyCertificate {
        inner: synthesize_closed_form(inst, l, eps0, r, mode, &opts).map_err(to_py)?,
    })
}

/// Fits a certificate whose weights average the prediction over
/// `Δbᵢ ∈ {0, …, ranges[i]}`.
#[pyfunction]
#[pyo3(signature = (instance, ranges=None))]
fn fit(instance: &PyInstance, ranges: Option<Vec<usize>>) -> PyResult<PyCertificate> {
    let rows = instance.inner.num_rows();
    let rg = ranges.unwrap_or_else(|| vec![0; rows]);
    let spec = FitSpec::new(rows).with_weights(weights(&rg));
    Ok(PyCertificate {
        inner: fit_dual(&instance.inner, &spec).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (instance, augmented=false))]
fn shor(instance: &PyInstance, augmented: bool) -> PyResult<PyRelaxation> {
    let b = if augmented {
        solve_shor2(&instance.inner)
    } else {
        solve_shor1(&instance.inner)
    };
    Ok(PyRelaxation {
        inner: b.map_err(to_py)?,
    })
}

/// Copositivity verdict of a square matrix: `"partition"`, `"spn"` or
/// `"refute"`.
#[pyfunction]
#[pyo3(signature = (rows, method="partition"))]
fn check_copositive(rows: Vec<Vec<f64>>, method: &str) -> PyResult<&'static str> {
    let m = matrix_from_rows(&rows).map_err(to_py)?;
    let v = match method {
        "partition" => check_partition(&m),
        "spn" => check_spn(&m),
        "refute" => refute(&m, 64),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    Ok(verdict_name(&v))
}

#[pyfunction]
fn select_weights(ranges: Vec<usize>) -> (Vec<f64>, Vec<f64>) {
    weights(&ranges)
}

#[pyfunction]
fn relative_gap(z_true: f64, p1: f64, p2: f64) -> f64 {
    gap(z_true, p1, p2).value
}

/// Chromatic index as `(low, high)`; equal bounds mean the search finished.
#[pyfunction]
#[pyo3(signature = (num_vertices, edges, budget=10_000_000))]
fn chromatic_index(num_vertices: usize, edges: Vec<(usize, usize)>, budget: usize) -> PyResult<(usize, usize)> {
    let g = Graph::new(num_vertices, &edges).map_err(to_py)?;
    Ok(match chromatic(&g, budget) {
        ChromaticIndex::Exact(k) => (k, k),
        ChromaticIndex::Between(a, b) => (a, b),
    })
}

#[pymodule]
fn copsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyRelaxation>()?;
    m.add_function(wrap_pyfunction!(closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(shor, m)?)?;
    m.add_function(wrap_pyfunction!(check_copositive, m)?)?;
    m.add_function(wrap_pyfunction!(select_weights, m)?)?;
    m.add_function(wrap_pyfunction!(relative_gap, m)?)?;
    m.add_function(wrap_pyfunction!(chromatic_index, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_must_be_square() {
        assert!(matrix_from_rows(&[vec![1.0, 0.0], vec![0.0]]).is_err());
        let m = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn identity_verdict_name() {
        let v = check_partition(&DMatrix::identity(3, 3));
        assert_eq!(verdict_name(&v), "Copositive");
    }
}
