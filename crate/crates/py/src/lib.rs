//! Python bindings: instances, generators, the exact solver, pool scoring and
//! the LNS loop.

use std::path::PathBuf;

use hyplns::generators::{Family, GenSpec};
use hyplns::ilp::{self, Assignment, Direction, FileFormat, IlpInstance};
use hyplns::lns::{self, BudgetMode, LnsConfig, SelectionRule};
use hyplns::pool::{self, SolutionPool};
use hyplns::size_policy::SizePolicySpec;
use hyplns::subsolver::{self, SolveBudget};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: hyplns::Error) -> PyErr {
    use hyplns::Error as E;
    match e {
        E::Io { .. } | E::Load { .. } => PyIOError::new_err(e.to_string()),
        E::Dimension(_) | E::Parse { .. } | E::UnsupportedDomain(_) | E::Parameter(_) | E::Model(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Minimize => "minimize",
        Direction::Maximize => "maximize",
    }
}

/// A binary integer program.
#[pyclass(name = "Instance", module = "hyplns", frozen)]
#[derive(Clone)]
struct PyInstance {
    inner: IlpInstance,
}

impl PyInstance {
    fn assignment(&self, x: Vec<bool>) -> PyResult<Assignment> {
        self.inner.assignment(x).map_err(py_err)
    }
}

#[pymethods]
impl PyInstance {
    /// Read an instance file; `.mps` selects MPS, anything else the canonical format.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let format = FileFormat::from_path(&path);
        let inner = ilp::read_instance(&path, format).map_err(py_err)?;
        Ok(PyInstance { inner })
    }

    /// Generate a synthetic instance of family `mis`, `mvc`, `sc` or `ca`.
    #[staticmethod]
    #[pyo3(signature = (family, n, m, seed=0))]
    fn generate(family: &str, n: usize, m: usize, seed: u64) -> PyResult<Self> {
        let family: Family = family.parse().map_err(py_err)?;
        let inner = GenSpec { family, n, m, seed }.generate().map_err(py_err)?;
        Ok(PyInstance { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let format = FileFormat::from_path(&path);
        ilp::write_instance(&self.inner, &path, format).map_err(py_err)
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    #[getter]
    fn num_cons(&self) -> usize {
        self.inner.num_cons()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        direction_name(self.inner.direction())
    }

    #[getter]
    fn objective(&self) -> Vec<f64> {
        self.inner.objective().to_vec()
    }

    fn evaluate(&self, x: Vec<bool>) -> PyResult<f64> {
        let a = self.assignment(x)?;
        self.inner.evaluate_objective(&a).map_err(py_err)
    }

    fn is_feasible(&self, x: Vec<bool>) -> PyResult<bool> {
        Ok(self.inner.is_feasible(&self.assignment(x)?))
    }

    fn to_mps(&self) -> String {
        ilp::mps::write(&self.inner, &[], "hyplns")
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(num_vars={}, num_cons={}, direction='{}')",
            self.inner.num_vars(),
            self.inner.num_cons(),
            direction_name(self.inner.direction())
        )
    }
}

fn budget(node_limit: Option<u64>, time_limit: Option<f64>) -> PyResult<SolveBudget> {
    let b = match (node_limit, time_limit) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give node_limit or time_limit, not both")),
        (Some(n), None) => SolveBudget::nodes(n),
        (None, Some(t)) => SolveBudget::seconds(t),
        // no limit means solve to proven optimality
        (None, None) => return Ok(SolveBudget::unlimited()),
    };
    b.validate().map_err(py_err)?;
    Ok(b)
}

/// Branch-and-bound on the whole instance. Returns a dict with `status`,
/// `objective`, `solution` (None if nothing was found) and `nodes`.
#[pyfunction]
#[pyo3(signature = (instance, node_limit=None, time_limit=None))]
fn solve<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    node_limit: Option<u64>,
    time_limit: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let b = budget(node_limit, time_limit)?;
    let r = py
        .allow_threads(|| subsolver::solve(&instance.inner, &b, None))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", r.status.as_str())?;
    d.set_item("objective", r.best_objective())?;
    d.set_item("solution", r.best.as_ref().map(|a| a.values().to_vec()))?;
    d.set_item("nodes", r.nodes)?;
    Ok(d)
}

fn build_pool(solutions: Vec<Vec<bool>>, objectives: Vec<f64>, direction: &str) -> PyResult<SolutionPool> {
    let direction = match direction {
        "minimize" | "min" => Direction::Minimize,
        "maximize" | "max" => Direction::Maximize,
        other => return Err(PyValueError::new_err(format!("unknown direction {other:?}"))),
    };
    if solutions.len() != objectives.len() {
        return Err(PyValueError::new_err("one objective per solution is required"));
    }
    let n = solutions.first().map_or(0, Vec::len);
    let mut pool = SolutionPool::new(direction, n);
    for (x, obj) in solutions.into_iter().zip(objectives) {
        pool.push(Assignment::new(x), obj).map_err(py_err)?;
    }
    Ok(pool)
}

/// Ranks of pool solutions (1 = best; ties by discovery order).
#[pyfunction]
#[pyo3(signature = (solutions, objectives, direction="maximize"))]
fn rank(solutions: Vec<Vec<bool>>, objectives: Vec<f64>, direction: &str) -> PyResult<Vec<usize>> {
    Ok(pool::rank(&build_pool(solutions, objectives, direction)?))
}

/// Rank-weighted confidence score of each variable being 1, scaled to max 1.
#[pyfunction]
#[pyo3(signature = (solutions, objectives, direction="maximize"))]
fn confidence_scores(solutions: Vec<Vec<bool>>, objectives: Vec<f64>, direction: &str) -> PyResult<Vec<f64>> {
    let p = build_pool(solutions, objectives, direction)?;
    pool::confidence_scores(&p, &pool::rank(&p)).map_err(py_err)
}

/// Probability of freeing each variable given the current solution and scores.
#[pyfunction]
fn selection_probabilities(current: Vec<bool>, scores: Vec<f64>) -> PyResult<Vec<f64>> {
    pool::selection_probabilities(&Assignment::new(current), &scores).map_err(py_err)
}

/// Draw `size` distinct indices without replacement, weighted by `probs`.
#[pyfunction]
#[pyo3(signature = (probs, size, seed=0))]
fn sample_neighborhood(probs: Vec<f64>, size: usize, seed: u64) -> PyResult<Vec<usize>> {
    pool::sample_neighborhood(&probs, size, seed).map_err(py_err)
}

/// Run the large neighborhood search. `size_policy` takes the same strings as
/// the command line (`fixed:0.5`, `gaussian`, `beta:2,2`, `learned:policy.json`).
#[pyfunction]
#[pyo3(signature = (
    instance,
    initial_budget=50.0,
    step_budget=20.0,
    total_budget=1000.0,
    max_steps=100,
    budget_mode="nodes",
    size_policy="fixed:0.5",
    selection="pool",
    seed=0,
))]
#[allow(clippy::too_many_arguments)]
fn run_lns<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    initial_budget: f64,
    step_budget: f64,
    total_budget: f64,
    max_steps: usize,
    budget_mode: &str,
    size_policy: &str,
    selection: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let budget_mode: BudgetMode = budget_mode.parse().map_err(py_err)?;
    let size_policy: SizePolicySpec = size_policy.parse().map_err(py_err)?;
    let selection = match selection {
        "pool" => SelectionRule::Pool,
        "uniform" => SelectionRule::Uniform,
        other => return Err(PyValueError::new_err(format!("unknown selection rule {other:?}"))),
    };
    let cfg = LnsConfig {
        initial_budget,
        step_budget,
        total_budget,
        max_steps,
        budget_mode,
        size_policy,
        selection,
        seed,
        ..Default::default()
    };
    let out = py.allow_threads(|| lns::run(&instance.inner, &cfg)).map_err(py_err)?;
    let trace: Vec<(f64, u64, usize, f64)> = out
        .trace
        .points
        .iter()
        .map(|p| (p.elapsed_s, p.nodes_used, p.step, p.objective))
        .collect();
    let d = PyDict::new(py);
    d.set_item("best_objective", out.best_objective)?;
    d.set_item("initial_objective", out.initial_objective)?;
    d.set_item("best", out.best.values().to_vec())?;
    d.set_item("steps", out.steps)?;
    d.set_item("nodes_used", out.nodes_used)?;
    d.set_item("elapsed_s", out.elapsed.as_secs_f64())?;
    d.set_item("pool_size", out.pool.len())?;
    d.set_item("trace", trace)?;
    Ok(d)
}

/// Seconds `(initial, per step, total)` for a dataset class and family.
#[pyfunction]
fn allocate_budgets(class: &str, family: &str) -> PyResult<(f64, f64, f64)> {
    let family: Family = family.parse().map_err(py_err)?;
    let class = class.parse().map_err(py_err)?;
    Ok(lns::allocate_budgets(class, family))
}

#[pymodule]
#[pyo3(name = "hyplns")]
fn hyplns_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_scores, m)?)?;
    m.add_function(wrap_pyfunction!(selection_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(sample_neighborhood, m)?)?;
    m.add_function(wrap_pyfunction!(run_lns, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_budgets, m)?)?;
    Ok(())
}
