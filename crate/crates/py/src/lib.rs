//! Python bindings: scenario generation, the iterative solver, the fixed
//! baselines and the closed-form pair physics.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mecalloc_core::bench::Strategy;
use mecalloc_core::orchestrator::{self, InitStrategy};
use mecalloc_core::physics::{self, HessianPair};
use mecalloc_core::scenario::{self, GenParams, ScenarioDocument};
use mecalloc_core::{Error, PairPoint, SolveConfig};

create_exception!(mecalloc, InfeasibleError, PyValueError, "No allocation meets every deadline.");
create_exception!(mecalloc, ConvergenceError, PyRuntimeError, "An iteration limit was reached.");

fn to_py(e: Error) -> PyErr {
    if e.is_infeasible() {
        InfeasibleError::new_err(e.to_string())
    } else if e.is_convergence() {
        ConvergenceError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

#[pyclass(name = "Scenario", module = "mecalloc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    doc: ScenarioDocument,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            doc: ScenarioDocument::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.doc.to_json().map_err(to_py)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.doc.scenario.num_users
    }

    #[getter]
    fn num_aps(&self) -> usize {
        self.doc.scenario.num_aps
    }

    #[getter]
    fn gains(&self) -> Vec<Vec<f64>> {
        self.doc.scenario.gains.to_rows()
    }

    /// Copy with every deadline set to `deadline_s`.
    fn with_deadline(&self, deadline_s: f64) -> Self {
        let mut doc = self.doc.clone();
        doc.scenario.tasks.iter_mut().for_each(|t| t.deadline_s = deadline_s);
        Self { doc }
    }

    fn __repr__(&self) -> String {
        format!("Scenario(num_users={}, num_aps={})", self.num_users(), self.num_aps())
    }
}

#[pyclass(name = "Solution", module = "mecalloc", frozen)]
struct PySolution {
    inner: orchestrator::Solution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn energy_j(&self) -> f64 {
        self.inner.energy_j
    }

    #[getter]
    fn energy_mj(&self) -> f64 {
        self.inner.energy_j * 1e3
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.inner.trace.outer_iterations()
    }

    #[getter]
    fn outer_energies_j(&self) -> Vec<f64> {
        self.inner.trace.outer_energies_j.clone()
    }

    #[getter]
    fn data(&self) -> Vec<Vec<f64>> {
        self.inner.allocation.data.to_rows()
    }

    #[getter]
    fn bandwidth(&self) -> Vec<Vec<f64>> {
        self.inner.allocation.bandwidth.to_rows()
    }

    #[getter]
    fn compute(&self) -> Vec<Vec<f64>> {
        self.inner.allocation.compute.to_rows()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(energy_mj={:.6e}, outer_iterations={}, converged={})",
            self.energy_mj(),
            self.outer_iterations(),
            self.inner.converged
        )
    }
}

#[pyfunction]
#[pyo3(signature = (seed=42, users=8, aps=4, deadline_s=0.5, capacity_cps=2.5e10))]
fn generate(seed: u64, users: usize, aps: usize, deadline_s: f64, capacity_cps: f64) -> PyResult<PyScenario> {
    let params = GenParams {
        seed,
        num_users: users,
        num_aps: aps,
        deadline_s,
        capacity_cps,
        ..GenParams::default()
    };
    Ok(PyScenario {
        doc: scenario::generate(&params).map_err(to_py)?,
    })
}

fn config(scenario: &PyScenario, eps_mj: f64) -> SolveConfig {
    SolveConfig::for_scenario(&scenario.doc.scenario).with_epsilon_mj(eps_mj)
}

/// `init` is one of "equal", "random", "best-ap-90", "binary".
#[pyfunction]
#[pyo3(signature = (scenario, init="equal", seed=42, eps_mj=1e-2))]
fn solve_iterative(py: Python<'_>, scenario: &PyScenario, init: &str, seed: u64, eps_mj: f64) -> PyResult<PySolution> {
    let strategy = Strategy::parse(&format!("iterative-{init}"), seed).map_err(to_py)?;
    let cfg = config(scenario, eps_mj);
    let s = scenario.doc.scenario.clone();
    let inner = py.detach(move || strategy.run(&s, &cfg)).map_err(to_py)?;
    Ok(PySolution { inner })
}

/// Bandwidth/compute optimum with user `i` sending everything to AP
/// `assignment[i]`; best-gain APs when `assignment` is omitted.
#[pyfunction]
#[pyo3(signature = (scenario, assignment=None, eps_mj=1e-2))]
fn solve_fixed_assignment(scenario: &PyScenario, assignment: Option<Vec<usize>>, eps_mj: f64) -> PyResult<PySolution> {
    let s = &scenario.doc.scenario;
    let assignment = assignment.unwrap_or_else(|| orchestrator::best_snr_assignment(s));
    let inner = orchestrator::solve_fixed_assignment(s, &assignment, &config(scenario, eps_mj)).map_err(to_py)?;
    Ok(PySolution { inner })
}

#[pyfunction]
#[pyo3(signature = (scenario, eps_mj=1e-2))]
fn solve_fixed_equal(scenario: &PyScenario, eps_mj: f64) -> PyResult<PySolution> {
    let inner = Strategy::FixedEqual
        .run(&scenario.doc.scenario, &config(scenario, eps_mj))
        .map_err(to_py)?;
    Ok(PySolution { inner })
}

#[pyfunction]
fn evaluate<'py>(py: Python<'py>, scenario: &PyScenario, solution: &PySolution) -> PyResult<Bound<'py, PyDict>> {
    let m = orchestrator::evaluate(&scenario.doc.scenario, &solution.inner);
    let d = PyDict::new(py);
    d.set_item("energy_mj", m.energy_mj)?;
    d.set_item("max_load_share_per_user", m.max_load_share_per_user)?;
    d.set_item("multi_ap_user_count", m.multi_ap_user_count)?;
    d.set_item("constraint_residuals", m.constraint_residuals)?;
    Ok(d)
}

#[pyfunction]
fn initialize(scenario: &PyScenario, init: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let strategy = match Strategy::parse(&format!("iterative-{init}"), seed).map_err(to_py)? {
        Strategy::Iterative { init } => init,
        _ => InitStrategy::EqualSplit,
    };
    Ok(orchestrator::initialize(&scenario.doc.scenario, &strategy)
        .map_err(to_py)?
        .to_rows())
}

/// Linear gain and whether the distance hit the 1 m floor.
#[pyfunction]
fn pathloss_gain(distance_m: f64) -> (f64, bool) {
    scenario::pathloss_gain(distance_m)
}

/// Minimal transmit energy of one pair, in Joules.
#[pyfunction]
#[pyo3(signature = (data_bits, bandwidth_hz, compute_cps, deadline_s, cycles_per_bit, noise_over_gain))]
fn pair_energy(
    data_bits: f64,
    bandwidth_hz: f64,
    compute_cps: f64,
    deadline_s: f64,
    cycles_per_bit: f64,
    noise_over_gain: f64,
) -> PyResult<f64> {
    let p = PairPoint::from_compute(data_bits, bandwidth_hz, compute_cps, deadline_s, cycles_per_bit, noise_over_gain);
    physics::pair_energy(&p).map_err(to_py)
}

/// `(dE/dL, dE/dx, dE/dt)` at a pair given by its slack `t`.
#[pyfunction]
#[pyo3(signature = (data_bits, bandwidth_hz, slack_s, deadline_s, cycles_per_bit, noise_over_gain))]
fn partials(
    data_bits: f64,
    bandwidth_hz: f64,
    slack_s: f64,
    deadline_s: f64,
    cycles_per_bit: f64,
    noise_over_gain: f64,
) -> PyResult<(f64, f64, f64)> {
    let p = PairPoint::from_slack(data_bits, bandwidth_hz, slack_s, deadline_s, cycles_per_bit, noise_over_gain);
    let g = physics::partials(&p).map_err(to_py)?;
    Ok((g.d_dl, g.d_dx, g.d_dt))
}

/// 2×2 Hessian for `pair` in {"lx", "lq", "xt"} and its determinant.
#[pyfunction]
#[pyo3(signature = (pair, data_bits, bandwidth_hz, compute_cps, deadline_s, cycles_per_bit, noise_over_gain))]
fn hessian(
    pair: &str,
    data_bits: f64,
    bandwidth_hz: f64,
    compute_cps: f64,
    deadline_s: f64,
    cycles_per_bit: f64,
    noise_over_gain: f64,
) -> PyResult<([[f64; 2]; 2], f64)> {
    let which = match pair {
        "lx" => HessianPair::LX,
        "lq" => HessianPair::LQ,
        "xt" => HessianPair::XT,
        other => return Err(PyValueError::new_err(format!("unknown pair {other:?}"))),
    };
    let p = PairPoint::from_compute(data_bits, bandwidth_hz, compute_cps, deadline_s, cycles_per_bit, noise_over_gain);
    let h = physics::hessian_diag(&p, which).map_err(to_py)?;
    Ok((h.matrix, h.determinant))
}

#[pymodule]
fn mecalloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySolution>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(initialize, m)?)?;
    m.add_function(wrap_pyfunction!(solve_iterative, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fixed_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fixed_equal, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(pathloss_gain, m)?)?;
    m.add_function(wrap_pyfunction!(pair_energy, m)?)?;
    m.add_function(wrap_pyfunction!(partials, m)?)?;
    m.add_function(wrap_pyfunction!(hessian, m)?)?;
    Ok(())
}
