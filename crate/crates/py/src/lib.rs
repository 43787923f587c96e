//! Python bindings: load scenarios, run the three operating modes, read
//! traces and metrics, and solve single games.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rhg_core::game::{assemble, audit};
use rhg_core::sim::{self, Trace as CoreTrace};
use rhg_core::solver::{solve_steady_state, solve_vgne_direct, solve_vgne_iterative};
use rhg_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(module = "rhg", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: sim::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        rhg_core::scenario::load_scenario(&path)
            .map(|inner| Scenario { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = rhg_core::scenario::parse_scenario(text).map_err(py_err)?;
        let inner = rhg_core::scenario::materialize(&file, std::path::Path::new(".")).map_err(py_err)?;
        Ok(Scenario { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids()
    }

    /// Copy with a different number of simulated steps.
    fn with_steps(&self, steps: usize) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.steps = steps;
        inner.validate().map_err(py_err)?;
        Ok(Scenario { inner })
    }

    /// Runs `"rhg"`, `"day-ahead"` or `"none"`.
    #[pyo3(signature = (mode = "rhg"))]
    fn simulate(&self, py: Python<'_>, mode: &str) -> PyResult<Trace> {
        let run = match mode {
            "rhg" => sim::run_receding_horizon,
            "day-ahead" => sim::run_day_ahead,
            "none" => sim::run_no_dsm,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let inner = py.detach(|| run(&self.inner)).map_err(py_err)?;
        Ok(Trace { inner })
    }

    /// Steady-state equilibrium for the parameters of `step`, as
    /// `{"feasible", "states": [(zeta, q)], "inputs": [(e, s)], "max_violation"}`.
    #[pyo3(signature = (step = 0))]
    fn steady_state<'py>(&self, py: Python<'py>, step: usize) -> PyResult<Bound<'py, PyDict>> {
        if step >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "step must be below {}",
                self.inner.len()
            )));
        }
        let ss = solve_steady_state(&self.inner.params, &self.inner.step_at(step, None)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("feasible", ss.feasible)?;
        d.set_item("states", ss.x_bar.iter().map(|x| (x.zeta, x.q)).collect::<Vec<_>>())?;
        d.set_item("inputs", ss.u_bar)?;
        d.set_item("max_violation", ss.max_violation)?;
        Ok(d)
    }

    /// Solves the horizon game seen at `step` from the scenario's initial
    /// states and returns the first inputs `[(e, s)]` and the KKT residual.
    #[pyo3(signature = (step = 0, iterative = false))]
    fn solve_game(&self, py: Python<'_>, step: usize, iterative: bool) -> PyResult<(Vec<(f64, f64)>, f64)> {
        let scn = &self.inner;
        let window = scn.window(step, scn.horizon).map_err(py_err)?;
        let game = assemble(&scn.x0, &scn.params, &window).map_err(py_err)?;
        let sol = py
            .detach(|| {
                if iterative {
                    solve_vgne_iterative(&game, &scn.solver.iterative_options())
                } else {
                    solve_vgne_direct(&game, &scn.solver.direct_options())
                }
            })
            .map_err(py_err)?;
        if !sol.is_converged() {
            return Err(PyRuntimeError::new_err(format!("{:?}", sol.status)));
        }
        Ok((game.first_inputs(&sol.z), sol.kkt_residual))
    }

    /// Worst relative errors `(pseudo_gradient, potential)` of the assembled
    /// gradients against finite differences at random points.
    #[pyo3(signature = (samples = 20, seed = 0))]
    fn gradcheck(&self, samples: usize, seed: u64) -> PyResult<(f64, Option<f64>)> {
        let scn = &self.inner;
        let game = assemble(&scn.x0, &scn.params, &scn.window(0, scn.horizon).map_err(py_err)?).map_err(py_err)?;
        let points = audit::random_points(&game, samples.max(1), 5.0, seed);
        let a = audit::audit_points(&game, &points, 0.5).map_err(py_err)?;
        Ok((a.pseudo_gradient, a.potential))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, prosumers={}, steps={}, horizon={})",
            self.inner.name,
            self.inner.prosumers(),
            self.inner.steps,
            self.inner.horizon
        )
    }
}

#[pyclass(module = "rhg", frozen)]
struct Trace {
    inner: CoreTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.label()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    #[getter]
    fn aggregate(&self) -> Vec<f64> {
        self.inner.aggregate_loads()
    }

    #[getter]
    fn peak(&self) -> f64 {
        self.inner.peak()
    }

    /// `[t][prosumer] -> (zeta, q)` for `t = 0..=len`.
    #[getter]
    fn states(&self) -> Vec<Vec<(f64, f64)>> {
        (0..=self.inner.records.len())
            .filter_map(|t| self.inner.states_at(t))
            .map(|xs| xs.iter().map(|x| (x.zeta, x.q)).collect())
            .collect()
    }

    /// `[t][prosumer] -> (e, s)`.
    #[getter]
    fn inputs(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner.records.iter().map(|r| r.inputs.clone()).collect()
    }

    /// `(step, reason)` when the run stopped early.
    #[getter]
    fn failure(&self) -> Option<(usize, String)> {
        self.inner.failure.as_ref().map(|f| (f.step, f.reason.clone()))
    }

    /// `(step, amount)` of every aggregate-limit violation.
    #[pyo3(signature = (tol = 1e-6))]
    fn violations(&self, tol: f64) -> Vec<(usize, f64)> {
        self.inner.violations(tol)
    }

    /// Metrics against a no-DSM run of `scenario` as a dict.
    fn metrics<'py>(&self, py: Python<'py>, scenario: &Scenario) -> PyResult<Bound<'py, PyDict>> {
        let report = self.report(&scenario.inner)?;
        let d = PyDict::new(py);
        d.set_item("peak_kw", report.peak_kw)?;
        d.set_item("baseline_peak_kw", report.baseline_peak_kw)?;
        d.set_item("shaving_pct", report.shaving_pct)?;
        d.set_item("violations", report.violations)?;
        d.set_item("max_violation_kw", report.max_violation_kw)?;
        d.set_item("total_violation_kwh", report.total_violation_kwh)?;
        d.set_item("total_cost", report.total_cost)?;
        d.set_item(
            "cost_by_prosumer",
            report
                .cost_by_prosumer
                .into_iter()
                .collect::<std::collections::BTreeMap<_, _>>(),
        )?;
        d.set_item("eod_dip", report.eod_dip)?;
        d.set_item("midnight_soc", report.midnight_soc)?;
        Ok(d)
    }

    /// Writes trace.csv, aggregate.csv and metrics.json into `out`.
    fn write(&self, scenario: &Scenario, out: PathBuf) -> PyResult<Vec<PathBuf>> {
        let report = self.report(&scenario.inner)?;
        rhg_core::output::write_trace(&out, &scenario.inner, &self.inner, &report).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

impl Trace {
    fn report(&self, scenario: &sim::Scenario) -> PyResult<sim::MetricsReport> {
        let mut baseline = if self.inner.mode == sim::Mode::None {
            self.inner.clone()
        } else {
            sim::run_no_dsm(scenario).map_err(py_err)?
        };
        baseline.records.truncate(self.inner.records.len());
        sim::metrics(&self.inner, &baseline, None).map_err(py_err)
    }
}

#[pymodule]
fn rhg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Trace>()?;
    Ok(())
}
