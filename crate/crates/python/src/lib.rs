//! Python bindings: `Network`, the analysis pipeline and the simulator.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use oscnet::efflap;
use oscnet::error::OscError;
use oscnet::fixtures;
use oscnet::linalg::CMat;
use oscnet::model::{self, render_netlist};
use oscnet::report::{self, IcSpec, SimulateOptions};
use oscnet::spectral::{self, SyncOptions, DEFAULT_SEED};

create_exception!(pyoscnet, OscnetError, PyValueError);

fn err(e: OscError) -> PyErr {
    OscnetError::new_err(e.to_string())
}

pub fn matrix_from_rows(rows: &[Vec<Complex64>]) -> Result<CMat, OscError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(OscError::SizeMismatch("rows of unequal length".into()));
    }
    Ok(CMat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn rows_of(m: &CMat) -> Vec<Vec<Complex64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated oscillator network.
#[pyclass(frozen)]
struct Network {
    inner: model::Network,
}

#[pymethods]
impl Network {
    /// Parse netlist text. With `strict`, nodes must be declared before use.
    #[staticmethod]
    #[pyo3(signature = (text, strict=false))]
    fn parse(text: &str, strict: bool) -> PyResult<Self> {
        model::parse_netlist(text, strict).map(|inner| Network { inner }).map_err(err)
    }

    /// The four-tank example with inductive coupling scaled by `alpha`.
    #[staticmethod]
    fn four_tank(alpha: f64) -> PyResult<Self> {
        fixtures::try_four_tank(alpha).map(|inner| Network { inner }).map_err(err)
    }

    fn render(&self) -> String {
        render_netlist(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.inner.omega0()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Network(n={}, q={}, omega0={})", self.inner.n(), self.inner.q(), self.inner.omega0())
    }
}

/// Full analysis report as a dict (the same document `oscnet analyze` prints).
#[pyfunction]
#[pyo3(signature = (net, seed=DEFAULT_SEED, tol_imag=None))]
fn analyze<'py>(py: Python<'py>, net: &Network, seed: u64, tol_imag: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let r = report::analyze(&net.inner, &SyncOptions { seed, tol_imag }).map_err(err)?;
    json_to_py(py, &r.to_json())
}

/// `Y` in canonical polarity, as a list of rows of complex numbers.
#[pyfunction]
fn effective_laplacian(net: &Network) -> PyResult<Vec<Vec<Complex64>>> {
    let (_, el) = efflap::effective_laplacian_of(&net.inner).map_err(err)?;
    Ok(rows_of(&el.y))
}

/// Restricted generalized eigenvalues of the pencil `(p, q)`.
#[pyfunction]
#[pyo3(signature = (p, q, seed=DEFAULT_SEED))]
fn reig(p: Vec<Vec<Complex64>>, q: Vec<Vec<Complex64>>, seed: u64) -> PyResult<Vec<Complex64>> {
    let p = matrix_from_rows(&p).map_err(err)?;
    let q = matrix_from_rows(&q).map_err(err)?;
    let mut ev = spectral::reig_shift_invert(&p, &q, seed).map_err(err)?.eigenvalues;
    spectral::sort_spectrum(&mut ev);
    Ok(ev)
}

/// `y1 (y1 + y2)^+ y2`.
#[pyfunction]
fn parallel_sum(y1: Vec<Vec<Complex64>>, y2: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    let y1 = matrix_from_rows(&y1).map_err(err)?;
    let y2 = matrix_from_rows(&y2).map_err(err)?;
    efflap::parallel_sum(&y1, &y2).map(|m| rows_of(&m)).map_err(err)
}

/// Modal simulation. Returns the summary dict extended with `t`, `v` (one row per
/// sample) and `W`.
#[pyfunction]
#[pyo3(signature = (net, t_end=None, dt=None, ic="random", seed=DEFAULT_SEED))]
fn simulate<'py>(
    py: Python<'py>,
    net: &Network,
    t_end: Option<f64>,
    dt: Option<f64>,
    ic: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let ic: IcSpec = ic.parse().map_err(err)?;
    let opts = SimulateOptions { t_end, dt, ic, seed, tol_imag: None };
    let sim = report::simulate(&net.inner, &opts).map_err(err)?;
    let out = json_to_py(py, &sim.summary.to_json())?;
    let dict = out.cast::<PyDict>()?;
    let tr = sim.trajectory();
    let v: Vec<Vec<f64>> = tr.v.row_iter().map(|r| r.iter().copied().collect()).collect();
    dict.set_item("t", tr.times.clone())?;
    dict.set_item("v", v)?;
    dict.set_item("W", sim.energy.w.clone())?;
    Ok(out)
}

#[pymodule]
fn pyoscnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("OscnetError", m.py().get_type::<OscnetError>())?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(effective_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(reig, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_sum, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0)]; 3];
        assert_eq!(rows_of(&matrix_from_rows(&rows).unwrap()), rows);
        assert!(matrix_from_rows(&[vec![Complex64::new(0.0, 0.0)], vec![]]).is_err());
    }
}
