//! Python bindings. Structured results cross the boundary as JSON and come
//! out as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rmt_core::ensembles::Potential;
use rmt_core::harness::{self, EnsembleSpec, ExperimentConfig, TestFunctionSpec};
use rmt_core::mesostat::TestFunction;
use rmt_core::rng::SeedSequence;
use rmt_core::{semicircle, theory, RmtError};

fn err(e: RmtError) -> PyErr {
    match e {
        RmtError::Numeric(_) | RmtError::Integration { .. } | RmtError::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Test function from a dict such as `{"type": "gaussian_bump", "center": 0, "width": 1}`.
fn test_function(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<TestFunction> {
    let text: String = py
        .import("json")?
        .call_method1("dumps", (spec,))?
        .extract()?;
    let spec: TestFunctionSpec = serde_json::from_str(&text)
        .map_err(|e| PyValueError::new_err(format!("bad test function: {e}")))?;
    spec.build().map_err(err)
}

#[pyfunction]
fn semicircle_density(x: f64) -> f64 {
    semicircle::density(x)
}

#[pyfunction]
fn semicircle_cdf(x: f64) -> f64 {
    semicircle::cdf(x)
}

#[pyfunction]
fn semicircle_quantile(u: f64) -> PyResult<f64> {
    semicircle::quantile(u).map_err(err)
}

/// `gamma_i` for 1-based `i`.
#[pyfunction]
fn classical_location(n: usize, i: usize) -> PyResult<f64> {
    if i == 0 || i > n {
        return Err(PyValueError::new_err(format!("i = {i} outside 1..={n}")));
    }
    Ok(semicircle::classical_locations(n).map_err(err)?.location(i))
}

/// Sorted eigenvalues of one draw; the stream matches trial `trial` of an
/// experiment run with the same seed.
#[pyfunction]
#[pyo3(signature = (ensemble, n, seed, offdiag="gaussian", diag="gaussian_var2", beta=1.0, t0=None, trial=0))]
#[allow(clippy::too_many_arguments)]
fn sample_spectrum(
    py: Python<'_>,
    ensemble: &str,
    n: usize,
    seed: u64,
    offdiag: &str,
    diag: &str,
    beta: f64,
    t0: Option<f64>,
    trial: u64,
) -> PyResult<Vec<f64>> {
    let spec = match ensemble {
        "goe" => EnsembleSpec::Goe,
        "wigner" => EnsembleSpec::Wigner {
            offdiag: offdiag.into(),
            diag: diag.into(),
        },
        "gaussian_divisible" => EnsembleSpec::GaussianDivisible {
            offdiag: offdiag.into(),
            diag: diag.into(),
            t0,
        },
        "beta_hermite" => EnsembleSpec::BetaHermite { beta },
        other => return Err(PyValueError::new_err(format!("unknown ensemble `{other}`"))),
    };
    spec.validate(n).map_err(err)?;
    py.detach(|| {
        let mut rng = SeedSequence::new(seed).named(&format!("spectrum/n={n}"), trial);
        spec.sample_spectrum(n, 0.2, &mut rng)
            .map(|s| s.into_values())
    })
    .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (function, s4=0.0, a2=1.0))]
fn variance_functional(
    py: Python<'_>,
    function: &Bound<'_, PyAny>,
    s4: f64,
    a2: f64,
) -> PyResult<Py<PyAny>> {
    let f = test_function(py, function)?;
    to_py(py, &theory::variance_functional(&f, s4, a2).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (function, n, s4=0.0, a2=1.0))]
fn mean_expansion(
    py: Python<'_>,
    function: &Bound<'_, PyAny>,
    n: usize,
    s4: f64,
    a2: f64,
) -> PyResult<Py<PyAny>> {
    let f = test_function(py, function)?;
    to_py(py, &theory::mean_expansion(&f, s4, a2, n).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (function, beta=1.0))]
fn mesoscopic_variance(py: Python<'_>, function: &Bound<'_, PyAny>, beta: f64) -> PyResult<f64> {
    let f = test_function(py, function)?;
    theory::mesoscopic_variance(&f, 1.0 / beta).map_err(err)
}

#[pyfunction]
fn beta_mean_correction(py: Python<'_>, function: &Bound<'_, PyAny>, beta: f64) -> PyResult<f64> {
    let f = test_function(py, function)?;
    theory::beta_mean_correction(&f, &Potential::hermite(), beta).map_err(err)
}

/// `N E[lambda_i - gamma_i]` to leading order.
#[pyfunction]
#[pyo3(signature = (gamma, s4=0.0, a2=1.0))]
fn single_eigenvalue_mean(gamma: f64, s4: f64, a2: f64) -> PyResult<f64> {
    theory::single_eigenvalue_mean(gamma, s4, a2).map_err(err)
}

#[pyfunction]
fn single_eigenvalue_variance_shift(gamma: f64, s4: f64, a2: f64, n: usize) -> PyResult<f64> {
    theory::single_eigenvalue_variance_shift(gamma, s4, a2, n).map_err(err)
}

/// `(distance, p_value)` against the standard normal.
#[pyfunction]
fn ks_normal(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    harness::ks_normal(&samples).map_err(err)
}

#[pyfunction]
fn estimate_mean_var(py: Python<'_>, samples: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &harness::estimate_mean_var(&samples).map_err(err)?)
}

/// Run an experiment from TOML text and return the report as a dict.
#[pyfunction]
#[pyo3(signature = (config, workers=None))]
fn run_experiment(py: Python<'_>, config: &str, workers: Option<usize>) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(err)?;
    let workers = workers.unwrap_or_else(harness::worker_count);
    let out = py
        .detach(|| harness::run_experiment_with(&cfg, workers))
        .map_err(err)?;
    to_py(py, &out.report)
}

#[pymodule]
fn rmt_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SCHEMA_VERSION", harness::SCHEMA_VERSION)?;
    m.add_function(wrap_pyfunction!(semicircle_density, m)?)?;
    m.add_function(wrap_pyfunction!(semicircle_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(semicircle_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(classical_location, m)?)?;
    m.add_function(wrap_pyfunction!(sample_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(variance_functional, m)?)?;
    m.add_function(wrap_pyfunction!(mean_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(mesoscopic_variance, m)?)?;
    m.add_function(wrap_pyfunction!(beta_mean_correction, m)?)?;
    m.add_function(wrap_pyfunction!(single_eigenvalue_mean, m)?)?;
    m.add_function(wrap_pyfunction!(single_eigenvalue_variance_shift, m)?)?;
    m.add_function(wrap_pyfunction!(ks_normal, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mean_var, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
