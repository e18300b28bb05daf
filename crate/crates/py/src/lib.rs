//! Python bindings: dense matrices cross the boundary as nested lists,
//! experiment configs as JSON strings mirroring the CLI config format.

// The #[pyfunction] expansion converts PyErr into PyErr for functions
// already returning PyResult.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use recovery::harness::{self, SolverDefaults};
use recovery::matrix::DenseMatrix;
use recovery::quantize;
use recovery::sensing;
use recovery::solvers;
use recovery::Error;

fn to_py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_lists(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let n1 = rows.len();
    if n1 == 0 {
        return Err(PyValueError::new_err("matrix must have at least one row"));
    }
    let n2 = rows[0].len();
    if rows.iter().any(|r| r.len() != n2) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    DenseMatrix::from_rows(n1, n2, &flat).map_err(to_py_err)
}

fn matrix_to_lists(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

/// Singular values of a dense matrix, non-increasing.
#[pyfunction]
fn singular_values(matrix: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = matrix_from_lists(matrix)?;
    Ok(m.svd().map_err(to_py_err)?.singular_values)
}

/// Best rank-r approximation in Frobenius norm.
#[pyfunction]
fn rank_r_project(matrix: Vec<Vec<f64>>, r: usize) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_lists(matrix)?;
    Ok(matrix_to_lists(&m.rank_r_project(r).map_err(to_py_err)?))
}

/// Scaled condition number: Frobenius norm times pseudo-inverse spectral norm.
#[pyfunction]
fn scaled_condition_number(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_from_lists(matrix)?
        .scaled_condition_number()
        .map_err(to_py_err)
}

/// One-bit quantization of measurements against per-measurement thresholds:
/// +1 where y >= threshold, -1 below.
#[pyfunction]
fn quantize_signs(y: Vec<f64>, thresholds: Vec<f64>) -> PyResult<Vec<i8>> {
    if y.len() != thresholds.len() {
        return Err(PyValueError::new_err(
            "y and thresholds must have equal length",
        ));
    }
    let gamma = DenseMatrix::from_rows(y.len(), 1, &thresholds).map_err(to_py_err)?;
    let rec = quantize::quantize(&y, &gamma).map_err(to_py_err)?;
    Ok((0..y.len()).map(|j| rec.sign(j, 0) as i8).collect())
}

/// Dither standard deviation from the dynamic range rule sigma = beta / 3.
#[pyfunction]
fn dither_scale(y: Vec<f64>) -> PyResult<f64> {
    let beta = quantize::dynamic_range(&y).map_err(to_py_err)?;
    Ok(quantize::dither_scale_from_dynamic_range(beta))
}

/// End-to-end seeded recovery on a synthetic instance. Returns
/// (estimate, relative_error) for an SVP-RKA solve against a planted
/// normalized rank-r matrix observed through n one-bit measurements.
#[pyfunction]
#[pyo3(signature = (n1, n2, rank, n, seed, max_iters=None))]
fn recover_synthetic(
    n1: usize,
    n2: usize,
    rank: usize,
    n: usize,
    seed: u64,
    max_iters: Option<u64>,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    use recovery::rng::mix64;
    let truth = sensing::generate_low_rank(n1, n2, rank, true, mix64(seed, 1)).map_err(to_py_err)?;
    let ens = sensing::generate_gaussian_ensemble(n, n1, n2, mix64(seed, 2));
    let y = ens.apply_operator(&truth.matrix, false).map_err(to_py_err)?;
    let beta = quantize::dynamic_range(&y).map_err(to_py_err)?;
    let plan = quantize::DitherPlan {
        m: 1,
        sigma: quantize::dither_scale_from_dynamic_range(beta),
        seed: mix64(seed, 4),
    };
    let gamma = quantize::generate_dithers(&plan, n);
    let rec = quantize::quantize(&y, &gamma).map_err(to_py_err)?;
    let mut cfg = solvers::RkaConfig::defaults_for(n, 1, mix64(seed, 5));
    if let Some(mi) = max_iters {
        cfg.max_iters = mi;
    }
    let x0 = DenseMatrix::zeros(n1, n2);
    let (xhat, _) = solvers::svp_rka(&rec, &ens, rank, &x0, &cfg, None).map_err(to_py_err)?;
    let rel = xhat.sub(&truth.matrix).frobenius_norm() / truth.frob_norm;
    Ok((matrix_to_lists(&xhat), rel))
}

/// Run one seeded trial (SVP-RKA plus the HSVT baseline). `config_json`
/// mirrors the CLI config format; the result comes back as a JSON string.
#[pyfunction]
fn run_trial(config_json: &str, lambda: f64, trial: u64) -> PyResult<String> {
    let cfg = harness::parse_config(config_json).map_err(to_py_err)?;
    cfg.validate().map_err(to_py_err)?;
    let result = harness::run_trial(&cfg, lambda, trial).map_err(to_py_err)?;
    serde_json::to_string(&result).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Run the full oversampling sweep and return the CSV as a string.
#[pyfunction]
fn sweep_csv(config_json: &str) -> PyResult<String> {
    let cfg = harness::parse_config(config_json).map_err(to_py_err)?;
    let mut buf = Vec::new();
    harness::run_sweep(&cfg, &mut buf, false).map_err(to_py_err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Hyperplane tessellation probe over an increasing measurement grid;
/// returns the report CSV.
#[pyfunction]
fn probe_csv(
    n1: usize,
    n2: usize,
    rank: usize,
    n_grid: Vec<usize>,
    trials: u64,
    seed: u64,
) -> PyResult<String> {
    let report = harness::tessellation_probe(
        n1,
        n2,
        rank,
        &n_grid,
        trials,
        seed,
        &SolverDefaults::default(),
    )
    .map_err(to_py_err)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(to_py_err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn onebit_lowrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(rank_r_project, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_condition_number, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_signs, m)?)?;
    m.add_function(wrap_pyfunction!(dither_scale, m)?)?;
    m.add_function(wrap_pyfunction!(recover_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add_function(wrap_pyfunction!(probe_csv, m)?)?;
    Ok(())
}
