//! Python bindings: the soft-threshold and lasso kernels, Hermitian
//! log-determinant, config hashing, the experiment driver, and the property
//! suite. Matrices cross the boundary as nested lists (rows of numbers).

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ssum_core::dictlearn;
use ssum_core::error::Error;
use ssum_core::experiment::{self, ExperimentConfig};
use ssum_core::hermitian::{chol_logdet, CMatrix, HermitianPd};
use ssum_core::sg;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(msg) => PyValueError::new_err(msg),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(PyValueError::new_err(format!("{what} must be nonempty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what} rows have unequal lengths")));
    }
    Ok(Array2::from_shape_fn((nrows, ncols), |(i, j)| rows[i][j]))
}

fn cmatrix_from_rows(rows: Vec<Vec<Complex64>>, what: &str) -> PyResult<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(PyValueError::new_err(format!("{what} must be nonempty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what} rows have unequal lengths")));
    }
    Ok(CMatrix::from_shape_fn((nrows, ncols), |(i, j)| rows[i][j]))
}

/// Componentwise soft threshold, the proximal map of tau * l1.
#[pyfunction]
fn shrink(values: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(PyValueError::new_err("tau must be nonnegative"));
    }
    Ok(values.into_iter().map(|v| sg::shrink_scalar(v, tau)).collect())
}

/// Coordinate-descent lasso: minimize 1/2 ||y - D a||^2 + lambda ||a||_1.
#[pyfunction]
#[pyo3(signature = (dictionary, signal, lambda_, tol = 1e-10))]
fn lasso(
    dictionary: Vec<Vec<f64>>,
    signal: Vec<f64>,
    lambda_: f64,
    tol: f64,
) -> PyResult<Vec<f64>> {
    let d = matrix_from_rows(dictionary, "dictionary")?;
    if signal.len() != d.nrows() {
        return Err(PyValueError::new_err(format!(
            "signal length {} does not match dictionary rows {}",
            signal.len(),
            d.nrows()
        )));
    }
    let y = Array1::from_vec(signal);
    let alpha = dictlearn::lasso(&d, &y, lambda_, tol).map_err(to_py_err)?;
    Ok(alpha.to_vec())
}

/// log det of a Hermitian positive definite matrix given as rows of complex
/// numbers.
#[pyfunction]
fn hermitian_logdet(matrix: Vec<Vec<Complex64>>) -> PyResult<f64> {
    let m = cmatrix_from_rows(matrix, "matrix")?;
    let pd = HermitianPd::new(m).map_err(to_py_err)?;
    Ok(chol_logdet(&pd))
}

/// SHA-256 of the canonical serialization of a config text.
#[pyfunction]
fn config_hash(config_text: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config_text).map_err(to_py_err)?;
    Ok(cfg.config_hash())
}

/// Run the experiment described by `config_text`, write artifacts into
/// `out_dir`, and return the scored rows as
/// (method, iteration, value, stderr) tuples.
#[pyfunction]
#[pyo3(signature = (config_text, out_dir, seed = None, threads = 1))]
fn run_experiment(
    config_text: &str,
    out_dir: &str,
    seed: Option<u64>,
    threads: usize,
) -> PyResult<Vec<(String, usize, f64, f64)>> {
    let mut cfg = ExperimentConfig::parse(config_text).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if threads == 0 {
        return Err(PyValueError::new_err("threads must be at least 1"));
    }
    cfg.threads = threads;
    let table = experiment::run_experiment(&cfg).map_err(to_py_err)?;
    experiment::emit_plot_data(&cfg, &table, std::path::Path::new(out_dir)).map_err(to_py_err)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.method.name().to_string(), r.iteration, r.value, r.stderr))
        .collect())
}

/// Run the invariant property suite for the config's scenario. Returns
/// (all_passed, rendered_report).
#[pyfunction]
fn property_suite(config_text: &str) -> PyResult<(bool, String)> {
    let cfg = ExperimentConfig::parse(config_text).map_err(to_py_err)?;
    let report = experiment::property_suite(&cfg);
    Ok((report.all_passed(), report.render()))
}

#[pymodule]
fn ssum_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(shrink, m)?)?;
    m.add_function(wrap_pyfunction!(lasso, m)?)?;
    m.add_function(wrap_pyfunction!(hermitian_logdet, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(property_suite, m)?)?;
    Ok(())
}
