//! Python bindings: load a model, solve for an equilibrium, and inspect
//! thresholds, value functions and long-run statistics.

use std::path::PathBuf;

use commodity_game::config::{load_config, parse_config, to_toml};
use commodity_game::dynamics::{self, default_start, long_run_stats, StationaryConfig};
use commodity_game::equilibrium::{solve_equilibrium, Branch, EquilibriumResult, Mode, TatonnementOptions};
use commodity_game::{Error, ModelParams, Regime, StrategyPair, Threshold};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_) | Error::Concavity { .. } | Error::Config(_) => PyValueError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| PyValueError::new_err(format!("bad {what} {s:?}: {e}")))
}

fn regime(s: &str) -> PyResult<Regime> {
    match s {
        "plus" | "+" => Ok(Regime::Plus),
        "minus" | "-" => Ok(Regime::Minus),
        _ => Err(PyValueError::new_err(format!("regime must be 'plus' or 'minus', got {s:?}"))),
    }
}

/// Thresholds as a name -> float dict; absent entries map to None.
fn thresholds<'py>(py: Python<'py>, s: &StrategyPair) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, t) in StrategyPair::ENTRY_NAMES.iter().zip(s.entries()) {
        let v = match t {
            Threshold::Absent => None,
            t => Some(t.as_f64()),
        };
        d.set_item(name, v)?;
    }
    Ok(d)
}

#[pyclass(name = "Model", module = "commodity_game", frozen)]
struct PyModel {
    params: ModelParams,
    inner: commodity_game::Model,
}

impl PyModel {
    fn build(params: ModelParams) -> PyResult<Self> {
        let inner = commodity_game::Model::new(params.clone()).map_err(py_err)?;
        Ok(PyModel { params, inner })
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Self::build(load_config(&path).map_err(py_err)?)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::build(parse_config(text, "<string>").map_err(py_err)?)
    }

    #[staticmethod]
    fn stylized() -> PyResult<Self> {
        Self::build(ModelParams::stylized())
    }

    #[staticmethod]
    fn crude_oil() -> PyResult<Self> {
        Self::build(ModelParams::crude_oil())
    }

    fn to_toml(&self) -> String {
        to_toml(&self.params)
    }

    /// Profit rates at `x`: (producer, consumer).
    fn profits(&self, x: f64) -> (f64, f64) {
        (self.inner.producer.eval(x), self.inner.consumer.eval(x))
    }

    #[pyo3(signature = (branch = "generic", mode = "async", max_iter = 200, tol = 1e-9))]
    fn solve(&self, py: Python<'_>, branch: &str, mode: &str, max_iter: usize, tol: f64) -> PyResult<Equilibrium> {
        let branch: Branch = parse("branch", branch)?;
        let opts = TatonnementOptions {
            mode: parse::<Mode>("mode", mode)?,
            max_iter,
            tol,
        };
        let result = py.detach(|| solve_equilibrium(&self.inner, branch, opts)).map_err(py_err)?;
        Ok(Equilibrium {
            model: self.inner.clone(),
            result,
        })
    }
}

#[pyclass(module = "commodity_game", frozen)]
struct Equilibrium {
    model: commodity_game::Model,
    result: EquilibriumResult,
}

#[pymethods]
impl Equilibrium {
    #[getter]
    fn type_tag(&self) -> &'static str {
        self.result.type_tag.label()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.result.iterations
    }

    /// True when every ODE, pasting and variational check passed.
    #[getter]
    fn verified(&self) -> bool {
        self.result.diagnostics.all_pass()
    }

    #[getter]
    fn failed_checks(&self) -> Vec<String> {
        self.result.diagnostics.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    fn thresholds<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        thresholds(py, &self.result.strategies)
    }

    fn producer_value(&self, regime_name: &str, x: f64) -> PyResult<f64> {
        Ok(self.result.producer.values.eval(regime(regime_name)?, x))
    }

    fn consumer_value(&self, regime_name: &str, x: f64) -> PyResult<f64> {
        Ok(self.result.consumer.values.eval(regime(regime_name)?, x))
    }

    /// Time averages over simulated paths; see `StationaryConfig` for defaults.
    #[pyo3(signature = (paths = None, horizon = None, dt = None, burn_in = None, seed = 1, bridge = false))]
    fn long_run_stats<'py>(
        &self,
        py: Python<'py>,
        paths: Option<usize>,
        horizon: Option<f64>,
        dt: Option<f64>,
        burn_in: Option<f64>,
        seed: u64,
        bridge: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let d = StationaryConfig::for_model(&self.model);
        let cfg = StationaryConfig {
            paths: paths.unwrap_or(d.paths),
            horizon: horizon.unwrap_or(d.horizon),
            dt: dt.unwrap_or(d.dt),
            burn_in: burn_in.unwrap_or(d.burn_in),
            seed,
            bridge,
            ..d
        };
        let s = &self.result.strategies;
        let st = py
            .detach(|| {
                let (x0, r0) = default_start(&self.model, s)?;
                long_run_stats(&self.model, s, x0, r0, cfg)
            })
            .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("mean", st.mean)?;
        out.set_item("var", st.var)?;
        out.set_item("mean_pi_p", st.mean_pi_p)?;
        out.set_item("mean_pi_c", st.mean_pi_c)?;
        out.set_item("switches_per_year", st.switches_per_year)?;
        out.set_item("impulses_per_year", st.impulses_per_year)?;
        out.set_item("rho_plus", st.rho_plus)?;
        out.set_item("years", st.years)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("<Equilibrium {}: {}>", self.result.type_tag.label(), self.result.strategies)
    }
}

/// Probability that drifted Brownian motion from `x` leaves `(a, b)` through `a`.
#[pyfunction]
fn hitting_prob(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    dynamics::hitting_prob(x, a, b, mu, sigma)
}

/// Expected time for drifted Brownian motion from `x` to leave `(a, b)`.
#[pyfunction]
fn expected_exit_time(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    dynamics::expected_exit_time(x, a, b, mu, sigma)
}

#[pymodule(name = "commodity_game")]
pub fn commodity_game_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<Equilibrium>()?;
    m.add_function(wrap_pyfunction!(hitting_prob, m)?)?;
    m.add_function(wrap_pyfunction!(expected_exit_time, m)?)?;
    Ok(())
}
