//! Python bindings. Reports cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use nambu_core::arrange::{self, EquivalenceOptions};
use nambu_core::cli::{invariants_document, CliError};
use nambu_core::geometry::{make_grid, DomainKind, QuadGrid};
use nambu_core::invariants::{
    self as inv, AnalysisOptions, InvariantsError, NambuField, VolumeOptions,
};
use nambu_core::normalform;
use nambu_core::scenario::{Overrides, Scenario};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn invariants_error(e: InvariantsError) -> PyErr {
    match e {
        InvariantsError::NonConvergent { .. } => PyArithmeticError::new_err(e.to_string()),
        e => value_error(e),
    }
}

fn setup(
    domain: &str,
    f: &str,
    resolution: Option<Vec<usize>>,
) -> PyResult<(NambuField, QuadGrid)> {
    let kind: DomainKind = domain.parse().map_err(value_error)?;
    let field = NambuField::parse(kind, f).map_err(value_error)?;
    let res = resolution.unwrap_or_else(|| kind.default_resolution());
    let grid = make_grid(kind, &res).map_err(value_error)?;
    Ok((field, grid))
}

fn volume_options(eps: Option<Vec<f64>>, tol_volume: Option<f64>) -> VolumeOptions {
    let mut o = VolumeOptions::default();
    if let Some(e) = eps {
        o.schedule = e;
    }
    if let Some(t) = tol_volume {
        o.tolerance = t;
    }
    o
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Full invariant report of `f` on `domain` as a dict.
#[pyfunction]
#[pyo3(signature = (domain, f, resolution=None, eps=None, tol_volume=None))]
fn invariants<'py>(
    py: Python<'py>,
    domain: &str,
    f: &str,
    resolution: Option<Vec<usize>>,
    eps: Option<Vec<f64>>,
    tol_volume: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let (field, grid) = setup(domain, f, resolution)?;
    let opts = AnalysisOptions {
        volume: volume_options(eps, tol_volume),
        ..Default::default()
    };
    let report = py
        .detach(|| inv::analyze(&field, &grid, &opts).map(|a| a.report()))
        .map_err(invariants_error)?;
    to_python(py, &report)
}

/// Regularized volume of `f` on `domain`.
#[pyfunction]
#[pyo3(signature = (domain, f, resolution=None, eps=None, tol_volume=None))]
fn regularized_volume(
    py: Python<'_>,
    domain: &str,
    f: &str,
    resolution: Option<Vec<usize>>,
    eps: Option<Vec<f64>>,
    tol_volume: Option<f64>,
) -> PyResult<f64> {
    let (field, grid) = setup(domain, f, resolution)?;
    let opts = volume_options(eps, tol_volume);
    py.detach(|| inv::regularized_volume(&field, &grid, &opts))
        .map(|v| v.value)
        .map_err(invariants_error)
}

/// Verdict name for two fields on the same domain.
#[pyfunction]
#[pyo3(signature = (domain, f1, f2, resolution=None))]
fn equivalence(
    py: Python<'_>,
    domain: &str,
    f1: &str,
    f2: &str,
    resolution: Option<Vec<usize>>,
) -> PyResult<String> {
    let (a, grid) = setup(domain, f1, resolution)?;
    let b = NambuField::parse(a.domain, f2).map_err(value_error)?;
    let opts = AnalysisOptions::default();
    let verdict = py.detach(|| -> Result<_, PyErr> {
        let ra = inv::analyze(&a, &grid, &opts)
            .map_err(invariants_error)?
            .report();
        let rb = inv::analyze(&b, &grid, &opts)
            .map_err(invariants_error)?
            .report();
        arrange::is_equivalent(&ra, &rb, &EquivalenceOptions::default()).map_err(value_error)
    })?;
    Ok(verdict.name().to_string())
}

/// Number of isomorphism classes of signed trees with `k` edges.
#[pyfunction]
fn count_signed_trees(py: Python<'_>, k: usize) -> PyResult<usize> {
    py.detach(|| arrange::enumerate_signed_trees(k))
        .map(|e| e.count)
        .map_err(value_error)
}

/// Solves `g' = g / f` and returns `(r, g, max residual)`.
#[pyfunction]
#[pyo3(signature = (f, r_max=0.9, k=1.0, samples=normalform::DEFAULT_SAMPLES))]
fn linearize(f: &str, r_max: f64, k: f64, samples: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let expr = normalform::parse_profile(f).map_err(value_error)?;
    let p = normalform::solve_linearization(&expr, r_max, k, samples).map_err(value_error)?;
    let residual = normalform::verify_linearization(&p);
    Ok((p.r, p.g_samples, residual))
}

/// The `invariants` document for a scenario file.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let sc = Scenario::load(&path, &Overrides::default()).map_err(value_error)?;
    let doc = py
        .detach(|| invariants_document(&sc))
        .map_err(|e: CliError| {
            if e.exit_code() == 2 {
                PyArithmeticError::new_err(e.to_string())
            } else {
                value_error(e)
            }
        })?;
    to_python(py, &doc.0)
}

#[pymodule]
fn nambu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(invariants, m)?)?;
    m.add_function(wrap_pyfunction!(regularized_volume, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(count_signed_trees, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
