use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use subsel_core::harness::{self, ExperimentConfig};
use subsel_core::reward::{LandscapeSpec, SyntheticLandscape as CoreLandscape};
use subsel_core::{mdp, Error};

create_exception!(subsel, OracleError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ConfigInvalid(_)
        | Error::InvalidArgument(_)
        | Error::InvalidAction(_)
        | Error::EpisodeFinished
        | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        e if e.is_oracle_failure() => OracleError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A subset of the `k` clusters.
#[pyclass(module = "subsel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct ClusterSet(mdp::ClusterSet);

#[pymethods]
impl ClusterSet {
    #[new]
    #[pyo3(signature = (k, indices = Vec::new()))]
    fn new(k: usize, indices: Vec<usize>) -> PyResult<Self> {
        mdp::ClusterSet::from_indices(k, indices).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_hex(k: usize, hex: &str) -> PyResult<Self> {
        mdp::ClusterSet::from_hex(k, hex).map(Self).map_err(to_py)
    }

    fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.universe()
    }

    fn indices(&self) -> Vec<usize> {
        self.0.to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __contains__(&self, i: usize) -> bool {
        self.0.contains(i)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("ClusterSet(k={}, indices={:?})", self.0.universe(), self.0.to_vec())
    }
}

/// A partial selection: the chosen clusters and the budget.
#[pyclass(module = "subsel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct SubsetState(mdp::SubsetState);

#[pymethods]
impl SubsetState {
    #[getter]
    fn selected(&self) -> ClusterSet {
        ClusterSet(self.0.selected().clone())
    }

    #[getter]
    fn step(&self) -> usize {
        self.0.step()
    }

    #[getter]
    fn budget(&self) -> usize {
        self.0.budget()
    }

    fn is_terminal(&self) -> bool {
        self.0.is_terminal()
    }

    /// Clusters that may be added next.
    fn valid_actions(&self) -> Vec<usize> {
        mdp::action_mask(&self.0).valid_actions().collect()
    }

    fn __repr__(&self) -> String {
        format!("SubsetState(selected={:?}, budget={})", self.0.selected().to_vec(), self.0.budget())
    }
}

/// The selection MDP: start empty, add one unselected cluster per step.
#[pyclass(module = "subsel", frozen)]
struct SelectionEnv(mdp::SelectionEnv);

#[pymethods]
impl SelectionEnv {
    #[new]
    fn new(k: usize, budget: usize) -> PyResult<Self> {
        mdp::SelectionEnv::new(k, budget).map(Self).map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn budget(&self) -> usize {
        self.0.budget()
    }

    fn reset(&self) -> SubsetState {
        SubsetState(self.0.reset())
    }

    /// Returns `(next_state, done)`.
    fn step(&self, state: &SubsetState, action: usize) -> PyResult<(SubsetState, bool)> {
        let (s, done) = self.0.step(&state.0, action).map_err(to_py)?;
        Ok((SubsetState(s), done))
    }
}

/// Quality-minus-redundancy landscape used as a synthetic oracle.
#[pyclass(module = "subsel", frozen)]
struct SyntheticLandscape(Arc<CoreLandscape>);

#[pymethods]
impl SyntheticLandscape {
    #[new]
    #[pyo3(signature = (k, seed = 0, lam = 0.5, c = 0.5, redundancy_prob = 0.3))]
    fn new(k: usize, seed: u64, lam: f64, c: f64, redundancy_prob: f64) -> PyResult<Self> {
        if k == 0 || !(c > 0.0) || !(lam >= 0.0) || !(0.0..=1.0).contains(&redundancy_prob) {
            return Err(PyValueError::new_err("need k >= 1, c > 0, lam >= 0 and redundancy_prob in [0, 1]"));
        }
        let spec = LandscapeSpec {
            redundancy_prob,
            lambda: lam,
            c,
        };
        Ok(Self(Arc::new(CoreLandscape::random(k, &spec, seed))))
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn quality(&self) -> Vec<f64> {
        self.0.quality().to_vec()
    }

    fn redundancy(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.0.k() || j >= self.0.k() {
            return Err(PyValueError::new_err("cluster index out of range"));
        }
        Ok(self.0.redundancy(i, j))
    }

    fn value(&self, set: &ClusterSet) -> f64 {
        self.0.value_of(&set.0)
    }

    fn loss(&self, set: &ClusterSet) -> f64 {
        self.0.loss(&set.0)
    }

    /// Reward for adding cluster `a` to `set`, in closed form.
    fn reward(&self, set: &ClusterSet, a: usize) -> PyResult<f64> {
        if a >= self.0.k() || set.0.contains(a) {
            return Err(to_py(Error::InvalidAction(a)));
        }
        Ok(self.0.analytic_reward(&set.0, a))
    }
}

fn parse_config(text: &str, fmt: Option<&str>) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_str_auto(text, fmt).map_err(to_py)
}

/// `5 - 2 ln(2x)`, the loss-to-score transform.
#[pyfunction]
fn apply_f(x: f64) -> PyResult<f64> {
    subsel_core::apply_f(x).map_err(to_py)
}

/// Cluster budget for a selection fraction `delta` of `k` clusters.
#[pyfunction]
fn budget_from_fraction(k: usize, delta: f64) -> PyResult<usize> {
    mdp::budget_from_fraction(k, delta).map_err(to_py)
}

/// Validates a TOML or JSON config and returns it with all defaults filled in.
#[pyfunction]
#[pyo3(signature = (text, fmt = None))]
fn load_config<'py>(py: Python<'py>, text: &str, fmt: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(text, fmt)?;
    json_to_py(py, &serde_json::to_string(&cfg).map_err(|e| to_py(e.into()))?)
}

#[pyfunction]
#[pyo3(signature = (text, fmt = None))]
fn config_hash(text: &str, fmt: Option<&str>) -> PyResult<String> {
    parse_config(text, fmt)?.hash().map_err(to_py)
}

/// Runs an experiment and returns its report as a dict. Artifacts go to
/// `output_dir` when given, otherwise to the config's own directory.
#[pyfunction]
#[pyo3(signature = (text, output_dir = None, fmt = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    text: &str,
    output_dir: Option<PathBuf>,
    fmt: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = parse_config(text, fmt)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    json_to_py(py, &serde_json::to_string(&report).map_err(|e| to_py(e.into()))?)
}

/// Rewrites the selected point ids of every run in a report; returns the paths.
#[pyfunction]
fn export_report(report_path: PathBuf) -> PyResult<Vec<String>> {
    let written = harness::export_report(&report_path).map_err(to_py)?;
    Ok(written.into_iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn subsel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ClusterSet>()?;
    m.add_class::<SubsetState>()?;
    m.add_class::<SelectionEnv>()?;
    m.add_class::<SyntheticLandscape>()?;
    m.add_function(wrap_pyfunction!(apply_f, m)?)?;
    m.add_function(wrap_pyfunction!(budget_from_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(export_report, m)?)?;
    m.add("OracleError", m.py().get_type::<OracleError>())?;
    Ok(())
}
