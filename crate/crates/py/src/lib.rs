//! Python bindings: model evaluation, identification, a stateful
//! controller and the closed-loop scenario drivers.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use chillmpc_core::config::RunConfig as CoreConfig;
use chillmpc_core::model::{self, AcState, ControlInput, ModelParams as CoreModel};
use chillmpc_core::nmpc::{mpc_step, MpcConfig, MpcSolution, PreviewWindow};
use chillmpc_core::sim::{self, BetaMode, BetaSchedule, EnergyReport, StepLog};
use chillmpc_core::sysid;
use chillmpc_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Identified model coefficients γ₁…γ₇ with air properties.
#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: CoreModel,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (gamma=None))]
    fn new(gamma: Option<[f64; 7]>) -> PyResult<Self> {
        let inner = gamma.map_or_else(CoreModel::default, CoreModel::from_gamma);
        inner.validate().map_err(py_err)?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn gamma(&self) -> [f64; 7] {
        self.inner.gamma()
    }

    #[getter]
    fn cp(&self) -> f64 {
        self.inner.cp
    }

    #[getter]
    fn ts(&self) -> f64 {
        self.inner.ts
    }

    /// Evaporator temperature one sample ahead.
    fn step_evap(&self, t_evap: f64, w_bl: f64, dw_bl: f64, t_evap_targ: f64, t_amb: f64) -> f64 {
        model::step_evap(
            &self.inner,
            &AcState::new(t_evap, w_bl),
            &ControlInput::new(dw_bl, t_evap_targ),
            t_amb,
        )
    }

    fn discharge_temp(&self, t_evap: f64, t_cab: f64) -> f64 {
        model::discharge_temp(&self.inner, t_evap, t_cab)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(gamma={:?})", self.inner.gamma())
    }
}

/// Discharge air cooling power, W.
#[pyfunction]
#[pyo3(signature = (t_cab, t_discharge, w_bl, cp=model::CP_AIR))]
fn dacp(t_cab: f64, t_discharge: f64, w_bl: f64, cp: f64) -> f64 {
    model::dacp(cp, t_cab, t_discharge, w_bl)
}

#[pyfunction]
#[pyo3(signature = (t_cab, t_discharge, w_bl, cop, cp=model::CP_AIR))]
fn compressor_power_estimate(t_cab: f64, t_discharge: f64, w_bl: f64, cop: f64, cp: f64) -> PyResult<f64> {
    model::compressor_power_estimate(cp, t_cab, t_discharge, w_bl, cop).map_err(py_err)
}

/// Fits γ on the first 70 % of a dataset CSV and scores the rest.
#[pyfunction]
fn identify<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let samples = sysid::read_dataset(&path).map_err(py_err)?;
    let records = sysid::records_from_samples(&samples);
    let (train, val) = sysid::split_train_validation(&records);
    let fit = sysid::fit_params(train).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("params", PyModelParams { inner: fit.params })?;
    d.set_item("rmse_devap", fit.rmse_devap)?;
    d.set_item("rmse_tdis", fit.rmse_tdis)?;
    d.set_item("condition_number", fit.condition_number)?;
    if !val.is_empty() {
        let v = sysid::validate(&fit.params, val).map_err(py_err)?;
        d.set_item("validation_rmse_devap", v.rmse_devap)?;
        d.set_item("validation_rmse_tdis", v.rmse_tdis)?;
    }
    Ok(d)
}

/// Receding-horizon controller that keeps its previous solution for warm
/// starts.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Controller {
    params: CoreModel,
    cfg: MpcConfig,
    prev: Option<MpcSolution>,
}

#[pymethods]
impl Controller {
    #[new]
    #[pyo3(signature = (params=None, np=10, alpha=1e5))]
    fn new(params: Option<PyModelParams>, np: usize, alpha: f64) -> PyResult<Self> {
        let cfg = MpcConfig {
            np,
            alpha,
            ..Default::default()
        };
        cfg.validate().map_err(py_err)?;
        Ok(Controller {
            params: params.map_or_else(CoreModel::default, |p| p.inner),
            cfg,
            prev: None,
        })
    }

    #[getter]
    fn np(&self) -> usize {
        self.cfg.np
    }

    /// One control instant. Preview lists hold `np + 1` stages.
    /// Returns `(dw_bl, t_evap_targ, status)`.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (t_evap, w_bl, p_dacp_targ, t_evap_max, beta, t_cab, t_amb, cop))]
    fn step(
        &mut self,
        t_evap: f64,
        w_bl: f64,
        p_dacp_targ: Vec<f64>,
        t_evap_max: Vec<f64>,
        beta: Vec<f64>,
        t_cab: f64,
        t_amb: f64,
        cop: f64,
    ) -> PyResult<(f64, f64, String)> {
        let pv = PreviewWindow {
            p_dacp_targ,
            t_evap_max,
            beta,
            t_cab,
            t_amb,
            cop,
        };
        let x0 = AcState::new(t_evap, w_bl);
        let (u, sol) = mpc_step(&self.params, &x0, &pv, &self.cfg, self.prev.as_ref()).map_err(py_err)?;
        let status = sol.status.as_str().to_owned();
        self.prev = Some(sol);
        Ok((u.dw_bl, u.t_evap_targ, status))
    }

    /// Per-solve diagnostics of the last step as JSON, if any.
    fn last_diagnostics(&self) -> Option<String> {
        self.prev.as_ref().map(MpcSolution::diagnostic_json)
    }

    fn reset(&mut self) {
        self.prev = None;
    }
}

/// Full run configuration (JSON document).
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    fn new() -> Self {
        PyRunConfig {
            inner: CoreConfig::default(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CoreConfig::load(&path).map(|inner| PyRunConfig { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreConfig::from_json(text).map(|inner| PyRunConfig { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.scenario.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.scenario.seed = seed;
    }
}

fn report_dict<'py>(py: Python<'py>, r: &EnergyReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("e_dace_kj", r.e_dace_kj)?;
    d.set_item("e_comp_kj", r.e_comp_kj)?;
    d.set_item("e_edf_kj", r.e_edf_kj)?;
    d.set_item("e_tot_kj", r.e_tot_kj)?;
    match r.deltas_vs_baseline_pct {
        Some(x) => {
            let dd = PyDict::new(py);
            dd.set_item("e_dace", x.e_dace)?;
            dd.set_item("e_comp", x.e_comp)?;
            dd.set_item("e_edf", x.e_edf)?;
            dd.set_item("e_tot", x.e_tot)?;
            d.set_item("deltas_vs_baseline_pct", dd)?;
        }
        None => d.set_item("deltas_vs_baseline_pct", py.None())?,
    }
    Ok(d)
}

fn run_dict<'py>(py: Python<'py>, log: &StepLog, transient_s: f64, csv: bool) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    if !log.is_empty() {
        d.set_item("report", report_dict(py, &sim::energy_report(log, None).map_err(py_err)?)?)?;
    }
    d.set_item("steps", log.len())?;
    d.set_item("max_tracking_error", log.max_tracking_error(transient_s))?;
    d.set_item("max_solve_time", log.max_solve_time())?;
    d.set_item("fail_safe_steps", log.fail_safe_count())?;
    if csv {
        d.set_item("log_csv", log.to_csv(false))?;
    }
    Ok(d)
}

/// Closed-loop run over a drive-cycle CSV. `beta` is "constant" or "speed".
#[pyfunction]
#[pyo3(signature = (config, cycle, beta="constant", targets=None))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PyRunConfig,
    cycle: PathBuf,
    beta: &str,
    targets: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = &config.inner;
    let cyc = c.cycle(Some(&cycle)).map_err(py_err)?;
    let tp = c.targets(targets.as_deref(), cyc.start() + cyc.duration()).map_err(py_err)?;
    let sched = match beta {
        "constant" => BetaSchedule::constant(),
        "speed" => c.beta.with_mode(BetaMode::SpeedDependent),
        other => return Err(PyValueError::new_err(format!("beta must be 'constant' or 'speed', got {other:?}"))),
    };
    let log = py
        .detach(|| sim::run_closed_loop(&c.plant, &c.model, &c.mpc, &cyc, &tp, &sched, &c.scenario))
        .map_err(py_err)?;
    run_dict(py, &log, c.scenario.transient_s, true)
}

/// Constant-speed sweep; returns one dict per speed.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &PyRunConfig, speeds: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let c = &config.inner;
    let tp = c.targets(None, c.sweep_duration_s).map_err(py_err)?;
    let pts = py
        .detach(|| sim::sweep_constant_speed(&c.plant, &c.model, &c.mpc, &speeds, &tp, &c.scenario))
        .map_err(py_err)?;
    pts.iter()
        .map(|p| {
            let d = report_dict(py, &p.report)?;
            d.set_item("speed_kmh", p.speed_kmh)?;
            d.set_item("max_tracking_error", p.max_tracking_error)?;
            Ok(d)
        })
        .collect()
}

/// Baseline PI, constant-β and speed-β rows on one cycle.
#[pyfunction]
fn compare<'py>(py: Python<'py>, config: &PyRunConfig, cycle: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let c = &config.inner;
    let cyc = c.cycle(Some(&cycle)).map_err(py_err)?;
    let tp = c.targets(None, cyc.start() + cyc.duration()).map_err(py_err)?;
    let rows = py
        .detach(|| sim::compare(&c.plant, &c.model, &c.mpc, &c.baseline, &cyc, &tp, &c.beta, &c.scenario))
        .map_err(py_err)?;
    rows.iter()
        .map(|r| {
            let d = report_dict(py, &r.report)?;
            d.set_item("scenario", r.scenario.as_str())?;
            d.set_item("max_tracking_error", r.max_tracking_error)?;
            d.set_item("final_t_cab_c", r.final_t_cab)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn chillmpc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<Controller>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(dacp, m)?)?;
    m.add_function(wrap_pyfunction!(compressor_power_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
