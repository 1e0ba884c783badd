//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with the `json` module, so they arrive as plain dicts and lists.

use koebe_fatou::corpus;
use koebe_fatou::geometry;
use koebe_fatou::pipeline::{run_pipeline as run_pipeline_rs, RunConfig};
use koebe_fatou::puzzle::{assemble_forest_with, audit_forest, build_invariant_disk, track_ends, PuzzleOptions};
use koebe_fatou::search::{search_mixed_cubic as search_rs, CubicGrid};
use koebe_fatou::uniformize::{self, Truncation};
use koebe_fatou::{Error, JordanPolyline as CoreCurve, PlanePoint, Poly, RationalMap as CoreMap};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Rejected(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn from_json<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

fn to_json<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(from_json(py, &s)?.unbind())
}

fn point(z: Option<Complex64>) -> PlanePoint {
    match z {
        Some(z) => PlanePoint::Finite(z),
        None => PlanePoint::Infinity,
    }
}

/// Rational map P/Q with coefficients listed from the constant term up.
#[pyclass(name = "RationalMap", module = "pykoebe", frozen, skip_from_py_object)]
#[derive(Clone)]
struct RationalMap {
    inner: CoreMap,
}

#[pymethods]
impl RationalMap {
    #[new]
    #[pyo3(signature = (num, den = None))]
    fn new(num: Vec<Complex64>, den: Option<Vec<Complex64>>) -> PyResult<Self> {
        let den = den.unwrap_or_else(|| vec![Complex64::new(1.0, 0.0)]);
        CoreMap::new(Poly::new(num), Poly::new(den)).map(|inner| RationalMap { inner }).map_err(err)
    }

    /// One of z^2, z^2-1, z^2+5, z^3-3z, mixed_cubic.
    #[staticmethod]
    fn corpus(name: &str) -> PyResult<Self> {
        corpus::corpus()
            .map_err(err)?
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, inner)| RationalMap { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown corpus map {name:?}")))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        CoreMap::from_json(s).map(|inner| RationalMap { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    /// f(z); None stands for ∞ on both sides.
    fn __call__(&self, z: Option<Complex64>) -> Option<Complex64> {
        self.inner.evaluate(point(z)).finite()
    }

    fn preimages(&self, w: Option<Complex64>) -> PyResult<Vec<Option<Complex64>>> {
        Ok(self.inner.preimages(point(w)).map_err(err)?.into_iter().map(|p| p.finite()).collect())
    }

    fn critical_points(&self) -> PyResult<Vec<(Option<Complex64>, usize)>> {
        Ok(self.inner.critical_points().map_err(err)?.into_iter().map(|(p, m)| (p.finite(), m)).collect())
    }

    fn fixed_points(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_json(py, &self.inner.fixed_points().map_err(err)?)
    }

    #[pyo3(signature = (budget = 256, tol = 1e-12))]
    fn classify_postcritical(&self, py: Python<'_>, budget: usize, tol: f64) -> PyResult<Py<PyAny>> {
        to_json(py, &self.inner.classify_postcritical(budget, tol).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("RationalMap({})", self.inner.to_json())
    }
}

/// Closed polyline, stored without the repeated first vertex.
#[pyclass(name = "JordanPolyline", module = "pykoebe", frozen, from_py_object)]
#[derive(Clone)]
struct JordanPolyline {
    inner: CoreCurve,
}

#[pymethods]
impl JordanPolyline {
    #[new]
    fn new(vertices: Vec<Complex64>) -> PyResult<Self> {
        CoreCurve::new(vertices, 0).map(|inner| JordanPolyline { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (center, r, n = 256))]
    fn circle(center: Complex64, r: f64, n: usize) -> PyResult<Self> {
        CoreCurve::circle(center, r, n).map(|inner| JordanPolyline { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (center, a, b, n = 256))]
    fn ellipse(center: Complex64, a: f64, b: f64, n: usize) -> PyResult<Self> {
        CoreCurve::ellipse(center, a, b, n).map(|inner| JordanPolyline { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (center, side, n = 256))]
    fn square(center: Complex64, side: f64, n: usize) -> PyResult<Self> {
        CoreCurve::square(center, side, n).map(|inner| JordanPolyline { inner }).map_err(err)
    }

    #[getter]
    fn vertices(&self) -> Vec<Complex64> {
        self.inner.vertices().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn contains(&self, z: Complex64) -> bool {
        self.inner.contains(z)
    }

    #[pyo3(signature = (budget = geometry::DEFAULT_PAIR_BUDGET, seed = 0))]
    fn turning_constant(&self, py: Python<'_>, budget: usize, seed: u64) -> PyResult<Py<PyAny>> {
        to_json(py, &geometry::turning_constant_seeded(&self.inner, budget, seed))
    }

    #[pyo3(signature = (probes = 32, seed = 0))]
    fn fatness(&self, py: Python<'_>, probes: usize, seed: u64) -> PyResult<Py<PyAny>> {
        to_json(py, &geometry::fatness(&self.inner, probes, seed))
    }

    fn circularity(&self) -> PyResult<f64> {
        uniformize::circularity(&self.inner).map_err(err)
    }
}

/// diam(K) / |z1 − z2| for a finite sample K.
#[pyfunction]
fn turning(k: Vec<Complex64>, z1: Complex64, z2: Complex64) -> PyResult<f64> {
    let k: Vec<PlanePoint> = k.into_iter().map(PlanePoint::Finite).collect();
    geometry::turning(&k, PlanePoint::Finite(z1), PlanePoint::Finite(z2)).map_err(err)
}

/// Puzzle forest dump plus end classes and the audit.
#[pyfunction]
#[pyo3(signature = (f, depth, seed = 0))]
fn build_puzzle(py: Python<'_>, f: &RationalMap, depth: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let forest = py
        .detach(|| {
            let reports = f.inner.classify_postcritical(256, 1e-12)?;
            let disk = build_invariant_disk(&f.inner, &reports)?;
            assemble_forest_with(&f.inner, &disk, depth, &PuzzleOptions { seed, ..PuzzleOptions::default() })
        })
        .map_err(err)?;
    let ends = if forest.depth() >= 3 { Some(track_ends(&forest, 0.9).map_err(err)?) } else { None };
    let out = serde_json::json!({
        "forest": forest.dump_json(),
        "ends": ends,
        "audit": audit_forest(&forest),
    });
    Ok(from_json(py, &out.to_string())?.unbind())
}

/// Circle domain of the complement of disjoint curves.
#[pyfunction]
#[pyo3(signature = (curves, tol = uniformize::DEFAULT_TOL, max_rounds = uniformize::DEFAULT_MAX_ROUNDS))]
fn koebe_uniformize(py: Python<'_>, curves: Vec<JordanPolyline>, tol: f64, max_rounds: usize) -> PyResult<Py<PyAny>> {
    let t = Truncation::new(curves.into_iter().map(|c| c.inner).collect()).map_err(err)?;
    let (domain, map, history) = py.detach(|| uniformize::koebe_uniformize(&t, tol, max_rounds)).map_err(err)?;
    let out = serde_json::json!({
        "domain": domain,
        "history": history,
        "residual": map.residual,
        "derivative_at_infinity": map.derivative_at_infinity,
    });
    Ok(from_json(py, &out.to_string())?.unbind())
}

/// Conformal modulus of the region between two disjoint curves.
#[pyfunction]
#[pyo3(signature = (a, b, grid = uniformize::DEFAULT_MODULUS_GRID))]
fn complement_modulus(py: Python<'_>, a: &JordanPolyline, b: &JordanPolyline, grid: usize) -> PyResult<f64> {
    py.detach(|| uniformize::complement_modulus(&a.inner, &b.inner, grid)).map_err(err)
}

/// Runs the whole pipeline on a JSON run configuration; returns the report.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_json: &str) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig::from_json(config_json).map_err(err)?;
    let report = py.detach(|| run_pipeline_rs(&cfg)).map_err(err)?;
    Ok(from_json(py, &report.to_json())?.unbind())
}

/// Default config for a map at a depth, as JSON text ready to edit.
#[pyfunction]
fn default_config(f: &RationalMap, depth: usize) -> String {
    RunConfig::new(f.inner.clone(), depth).to_json()
}

/// z³ − 3a²z + b cells with one escaping and one attracted critical orbit.
#[pyfunction]
#[pyo3(signature = (budget = 256))]
fn search_mixed_cubic(py: Python<'_>, budget: usize) -> PyResult<Py<PyAny>> {
    let hits = py.detach(|| search_rs(&CubicGrid::default(), budget)).map_err(err)?;
    to_json(py, &hits)
}

#[pymodule]
fn pykoebe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RationalMap>()?;
    m.add_class::<JordanPolyline>()?;
    m.add_function(wrap_pyfunction!(turning, m)?)?;
    m.add_function(wrap_pyfunction!(build_puzzle, m)?)?;
    m.add_function(wrap_pyfunction!(koebe_uniformize, m)?)?;
    m.add_function(wrap_pyfunction!(complement_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(search_mixed_cubic, m)?)?;
    Ok(())
}
