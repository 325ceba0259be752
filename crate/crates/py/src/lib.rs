//! Python bindings for `edgebatch`.
//!
//! Exposes the grey forecaster, the fuzzy controller and whole-run
//! simulation. Summaries come back as plain dicts.

use std::path::PathBuf;

use edgebatch::fuzzy::{ControllerConfig, FuzzyController, RuleTable};
use edgebatch::grey::{self, RawSeries};
use edgebatch::harness::{self, HarnessError, RunConfig, SummaryReport};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Io { .. } => PyOSError::new_err(e.to_string()),
        HarnessError::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// GM(1,1) model fitted on a short positive series.
#[pyclass(name = "GreyModel", frozen, module = "edgebatch")]
pub struct PyGreyModel {
    inner: grey::GreyModel,
}

#[pymethods]
impl PyGreyModel {
    /// Fits on strictly positive `values` (at least four points).
    #[staticmethod]
    fn fit(values: Vec<f64>) -> PyResult<Self> {
        let series = RawSeries::new(values).map_err(value_err)?;
        Ok(Self { inner: grey::GreyModel::fit(&series).map_err(value_err)? })
    }

    /// Fits after shifting the series up so every value is positive.
    #[staticmethod]
    fn fit_shifted(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: grey::GreyModel::fit_shifted(&values).map_err(value_err)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.offset()
    }

    /// Restored value at 1-based time index `t`; `t > n` forecasts.
    fn predict(&self, t: usize) -> PyResult<f64> {
        self.inner.predict(t).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("GreyModel(alpha={}, mu={}, offset={})", self.inner.alpha(), self.inner.mu(), self.inner.offset())
    }
}

/// Forecasts for the `horizon` points following `values`.
#[pyfunction]
fn fit_predict(values: Vec<f64>, horizon: usize) -> PyResult<Vec<f64>> {
    let series = RawSeries::new(values).map_err(value_err)?;
    grey::fit_predict(&series, horizon).map_err(value_err)
}

/// Fuzzy batch-interval controller with the shipped rule table.
#[pyclass(name = "FuzzyController", frozen, module = "edgebatch")]
pub struct PyFuzzyController {
    inner: FuzzyController,
}

#[pymethods]
impl PyFuzzyController {
    #[new]
    #[pyo3(signature = (block_interval=200, min_interval=400, max_interval=12_000, blocks_per_level=1, rules=None))]
    fn new(
        block_interval: u64,
        min_interval: u64,
        max_interval: u64,
        blocks_per_level: u32,
        rules: Option<&str>,
    ) -> PyResult<Self> {
        let config = ControllerConfig {
            block_interval,
            min_interval,
            max_interval,
            blocks_per_level,
            ..ControllerConfig::default()
        };
        let rules = match rules {
            Some(text) => RuleTable::parse(text).map_err(value_err)?,
            None => RuleTable::default(),
        };
        Ok(Self { inner: FuzzyController::new(config, rules).map_err(value_err)? })
    }

    /// Membership degrees of `x` in NB, NS, ZO, PS, PB.
    fn fuzzify(&self, x: f64) -> [f64; 5] {
        self.inner.fuzzify(x).0
    }

    /// Integer adjustment level for traffic change `c` and workload deviation `d`.
    fn infer(&self, c: f64, d: f64) -> i32 {
        self.inner.infer(c, d)
    }

    fn traffic_change(&self, q_next: f64, q_now: f64) -> f64 {
        self.inner.compute_traffic_change(q_next, q_now)
    }

    fn workload_deviation(&self, s: f64) -> f64 {
        self.inner.compute_workload_deviation(s)
    }

    fn adjust_interval(&self, current: u64, level: i32) -> u64 {
        self.inner.adjust_interval(current, level)
    }

    /// Rule table rows, indexed `[d_label][c_label]`.
    #[getter]
    fn rules(&self) -> [[i8; 5]; 5] {
        *self.inner.rules().rows()
    }
}

fn summary_dict<'py>(py: Python<'py>, summary: &SummaryReport) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn finish<'py>(py: Python<'py>, cfg: &RunConfig, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let result = match out {
        Some(dir) => harness::execute(cfg, &dir),
        None => harness::simulate(cfg),
    }
    .map_err(harness_err)?;
    summary_dict(py, &result.summary)
}

/// Runs a shipped preset and returns its summary. Writes the usual output
/// files when `out` is given.
#[pyfunction]
#[pyo3(signature = (name, disable_prediction=false, seed=None, out=None))]
fn run_preset<'py>(
    py: Python<'py>,
    name: &str,
    disable_prediction: bool,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = harness::preset(name).map_err(harness_err)?;
    cfg.disable_prediction |= disable_prediction;
    if let Some(seed) = seed {
        cfg.engine.seed = seed;
    }
    cfg.apply_flags();
    finish(py, &cfg, out)
}

/// Runs a `section.key = value` config given as text.
#[pyfunction]
#[pyo3(signature = (text, out=None))]
fn run_config<'py>(py: Python<'py>, text: &str, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::parse(text, None).map_err(harness_err)?;
    finish(py, &cfg, out)
}

/// Shipped config text for a preset.
#[pyfunction]
fn preset_source(name: &str) -> PyResult<&'static str> {
    harness::preset_source(name).map_err(harness_err)
}

#[pymodule]
#[pyo3(name = "edgebatch")]
pub fn edgebatch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGreyModel>()?;
    m.add_class::<PyFuzzyController>()?;
    m.add_function(wrap_pyfunction!(fit_predict, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(preset_source, m)?)?;
    m.add("PRESETS", harness::PRESET_NAMES.to_vec())?;
    Ok(())
}
