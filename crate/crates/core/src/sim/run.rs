//! Controller–plant loops and the scenario drivers built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::{energy_report, EnergyReport, StepLog, StepRecord};
use super::signals::{BetaMode, BetaSchedule, DriveCycle, TargetProfile};
use crate::error::{Error, Result};
use crate::model::{self, AirMode, ControlInput, ModelParams};
use crate::nmpc::{mpc_step, MpcConfig, MpcSolution, PreviewWindow};
use crate::plant::{Plant, PlantParams, PlantState};

/// Initial conditions and run-level switches shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioOptions {
    /// °C
    pub t_amb: f64,
    /// Cabin soak temperature, °C.
    pub t_cab0: f64,
    /// Initial evaporator temperature, °C; ambient when absent.
    pub t_evap0: Option<f64>,
    /// kg/s
    pub w_bl0: f64,
    /// Seed of the measurement-noise stream.
    pub seed: u64,
    /// Start-up period excluded from tracking metrics, s.
    pub transient_s: f64,
    pub recirculation: bool,
    /// Write wall-clock solve times into step-log CSVs (non-reproducible).
    pub log_solve_time: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            t_amb: 35.0,
            t_cab0: 45.0,
            t_evap0: None,
            w_bl0: 0.1,
            seed: 42,
            transient_s: 60.0,
            recirculation: true,
            log_solve_time: false,
        }
    }
}

impl ScenarioOptions {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.t_amb, self.t_cab0, self.t_evap0.unwrap_or(0.0), self.w_bl0];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scenario initial conditions"));
        }
        if !(self.transient_s >= 0.0) {
            return Err(Error::InvalidParam("transient_s must be >= 0".into()));
        }
        Ok(())
    }

    fn air_mode(&self) -> AirMode {
        if self.recirculation {
            AirMode::Recirculation
        } else {
            AirMode::FreshAir
        }
    }

    fn initial_state(&self) -> PlantState {
        PlantState::new(self.t_evap0.unwrap_or(self.t_amb), self.w_bl0, self.t_cab0)
    }
}

/// Velocity-form PI on blower flow with a fixed evaporator target:
/// `ΔW = kp·(e_k − e_{k−1}) + ki·T_s·e_k`, `e = P_targ − P_DACP`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiGains {
    /// (kg/s)/W
    pub kp: f64,
    /// (kg/s)/(W·s)
    pub ki: f64,
    /// °C
    pub t_evap_targ: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        PiGains {
            kp: 2.0e-5,
            ki: 6.0e-6,
            t_evap_targ: 3.0,
        }
    }
}

struct Setup {
    plant: Plant,
    ctrl: ModelParams,
    t0: f64,
    steps: usize,
    ts: f64,
}

fn setup(
    plant: &PlantParams,
    ctrl: &ModelParams,
    cycle: &DriveCycle,
    targets: &TargetProfile,
    opts: &ScenarioOptions,
) -> Result<Setup> {
    opts.validate()?;
    let mut pp = plant.clone();
    pp.model.air_mode = opts.air_mode();
    let mut ctrl = *ctrl;
    ctrl.air_mode = opts.air_mode();
    ctrl.validate()?;
    let ts = pp.model.ts;
    let steps = cycle.steps(ts);
    let t0 = cycle.start();
    if steps > 0 {
        targets.check_covers(t0, t0 + (steps - 1) as f64 * ts)?;
    }
    let plant = Plant::new(pp, opts.initial_state(), opts.seed)?;
    Ok(Setup {
        plant,
        ctrl,
        t0,
        steps,
        ts,
    })
}

/// Runs the receding-horizon controller against the plant over the cycle.
///
/// At every tick the controller reads the plant, freezes cabin temperature
/// and COP over the horizon, previews targets and β from the exact future
/// speeds, applies its first move and the step is logged with the state it
/// started from.
pub fn run_closed_loop(
    plant: &PlantParams,
    ctrl: &ModelParams,
    cfg: &MpcConfig,
    cycle: &DriveCycle,
    targets: &TargetProfile,
    sched: &BetaSchedule,
    opts: &ScenarioOptions,
) -> Result<StepLog> {
    cfg.validate()?;
    let Setup {
        mut plant,
        ctrl,
        t0,
        steps,
        ts,
    } = setup(plant, ctrl, cycle, targets, opts)?;
    let sched = sched.normalized_for(&cycle.resample(ts))?;
    let np = cfg.np;
    let mut prev: Option<MpcSolution> = None;
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = t0 + k as f64 * ts;
        let v = cycle.speed_at(t);
        let meas = plant.read(v);
        let mut pv = PreviewWindow {
            p_dacp_targ: Vec::with_capacity(np + 1),
            t_evap_max: Vec::with_capacity(np + 1),
            beta: Vec::with_capacity(np + 1),
            t_cab: meas.t_cab,
            t_amb: opts.t_amb,
            cop: meas.cop,
        };
        for i in 0..=np {
            let ti = t + i as f64 * ts;
            let (p, tmax) = targets.at(ti);
            pv.p_dacp_targ.push(p);
            pv.t_evap_max.push(tmax);
            pv.beta.push(sched.beta_of_speed(cycle.speed_at(ti))?);
        }
        let x0 = model::AcState::new(meas.t_evap, meas.w_bl);
        let (u, sol) = mpc_step(&ctrl, &x0, &pv, cfg, prev.as_ref())?;
        let s = plant.state;
        let pw = plant.step(&u, opts.t_amb, v);
        records.push(StepRecord {
            time: t,
            speed: v,
            t_evap: s.t_evap,
            w_bl: s.w_bl,
            t_cab: s.t_cab,
            dw_bl: u.dw_bl,
            t_evap_targ: u.t_evap_targ,
            t_discharge: pw.t_discharge,
            cop: pw.cop,
            beta: pv.beta[0],
            p_dacp: pw.p_dacp,
            p_dacp_targ: pv.p_dacp_targ[0],
            t_evap_max: pv.t_evap_max[0],
            p_comp: pw.p_comp,
            p_edf: pw.p_edf,
            solve_time: sol.solve_time,
            status: Some(sol.status),
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            x0_clamped: sol.x0_clamped,
        });
        prev = Some(sol);
    }
    Ok(StepLog { ts, records })
}

/// PI tracking of the unweighted target with blower flow only; the
/// evaporator target is held fixed and the blower is kept inside its box.
pub fn run_baseline(
    plant: &PlantParams,
    cfg: &MpcConfig,
    gains: &PiGains,
    cycle: &DriveCycle,
    targets: &TargetProfile,
    opts: &ScenarioOptions,
) -> Result<StepLog> {
    cfg.validate()?;
    let Setup {
        mut plant,
        t0,
        steps,
        ts,
        ..
    } = setup(plant, &plant.model, cycle, targets, opts)?;
    let b = &cfg.bounds;
    let cp = plant.params.model.cp;
    let air = plant.params.model.air_mode;
    let t_targ = gains.t_evap_targ.clamp(b.t_evap_targ_min, b.t_evap_targ_max);
    let mut e_prev: Option<f64> = None;
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = t0 + k as f64 * ts;
        let v = cycle.speed_at(t);
        let meas = plant.read(v);
        let (p_targ, t_max) = targets.at(t);
        let p_meas = model::dacp(cp, air.inlet_temp(meas.t_cab, opts.t_amb), meas.t_discharge, meas.w_bl);
        let e = p_targ - p_meas;
        let de = e - e_prev.unwrap_or(e);
        e_prev = Some(e);
        let raw = gains.kp * de + gains.ki * ts * e;
        let lo = b.dw_bl_min.max(b.w_bl_min - meas.w_bl).min(0.0);
        let hi = b.dw_bl_max.min(b.w_bl_max - meas.w_bl).max(0.0);
        let dw = if raw == 0.0 { 0.0 } else { raw.clamp(lo, hi) };
        let u = ControlInput::new(dw, t_targ);
        let s = plant.state;
        let pw = plant.step(&u, opts.t_amb, v);
        records.push(StepRecord {
            time: t,
            speed: v,
            t_evap: s.t_evap,
            w_bl: s.w_bl,
            t_cab: s.t_cab,
            dw_bl: u.dw_bl,
            t_evap_targ: u.t_evap_targ,
            t_discharge: pw.t_discharge,
            cop: pw.cop,
            beta: 1.0,
            p_dacp: pw.p_dacp,
            p_dacp_targ: p_targ,
            t_evap_max: t_max,
            p_comp: pw.p_comp,
            p_edf: pw.p_edf,
            solve_time: 0.0,
            status: None,
            kkt_residual: 0.0,
            iterations: 0,
            x0_clamped: false,
        });
    }
    Ok(StepLog { ts, records })
}

/// Runs `f` on a pool capped by `CHILLMPC_THREADS` when set.
fn in_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match std::env::var("CHILLMPC_THREADS") {
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::Config(format!("CHILLMPC_THREADS must be a positive integer, got `{s}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub speed_kmh: f64,
    pub report: EnergyReport,
    pub max_tracking_error: f64,
    pub fail_safe_steps: usize,
}

/// One constant-β tracking run per speed over the span of `targets`,
/// executed in parallel; results keep the order of `speeds`.
pub fn sweep_constant_speed(
    plant: &PlantParams,
    ctrl: &ModelParams,
    cfg: &MpcConfig,
    speeds: &[f64],
    targets: &TargetProfile,
    opts: &ScenarioOptions,
) -> Result<Vec<SweepPoint>> {
    if speeds.is_empty() {
        return Err(Error::InvalidParam("speed list is empty".into()));
    }
    let (t0, t1) = targets.span().ok_or_else(|| Error::Coverage("target profile is empty".into()))?;
    let sched = BetaSchedule::constant();
    let run = |v: f64| -> Result<SweepPoint> {
        let cycle = DriveCycle::new(vec![t0, t1], vec![v, v])?;
        let log = run_closed_loop(plant, ctrl, cfg, &cycle, targets, &sched, opts)?;
        Ok(SweepPoint {
            speed_kmh: v,
            report: energy_report(&log, None)?,
            max_tracking_error: log.max_tracking_error(opts.transient_s),
            fail_safe_steps: log.fail_safe_count(),
        })
    };
    in_pool(|| speeds.par_iter().map(|v| run(*v)).collect::<Result<Vec<_>>>())?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    ConstantBeta,
    SpeedBeta,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Baseline, Scenario::ConstantBeta, Scenario::SpeedBeta];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::ConstantBeta => "constant_beta",
            Scenario::SpeedBeta => "speed_beta",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: Scenario,
    /// Deltas are relative to the baseline row.
    pub report: EnergyReport,
    pub max_tracking_error: f64,
    pub final_t_cab: f64,
    pub log: StepLog,
}

/// Baseline PI, constant-β MPC and speed-dependent-β MPC on one scenario,
/// run in parallel. `sched` supplies the table for the speed-β row.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    plant: &PlantParams,
    ctrl: &ModelParams,
    cfg: &MpcConfig,
    gains: &PiGains,
    cycle: &DriveCycle,
    targets: &TargetProfile,
    sched: &BetaSchedule,
    opts: &ScenarioOptions,
) -> Result<Vec<ComparisonRow>> {
    let speed_sched = sched.with_mode(BetaMode::SpeedDependent);
    let run = |sc: Scenario| -> Result<StepLog> {
        match sc {
            Scenario::Baseline => run_baseline(plant, cfg, gains, cycle, targets, opts),
            Scenario::ConstantBeta => {
                run_closed_loop(plant, ctrl, cfg, cycle, targets, &BetaSchedule::constant(), opts)
            }
            Scenario::SpeedBeta => run_closed_loop(plant, ctrl, cfg, cycle, targets, &speed_sched, opts),
        }
    };
    let logs = in_pool(|| {
        Scenario::ALL
            .par_iter()
            .map(|sc| run(*sc))
            .collect::<Result<Vec<_>>>()
    })??;
    let base = &logs[0];
    Scenario::ALL
        .iter()
        .zip(&logs)
        .map(|(sc, log)| {
            Ok(ComparisonRow {
                scenario: *sc,
                report: energy_report(log, Some(base))?,
                max_tracking_error: log.max_tracking_error(opts.transient_s),
                final_t_cab: log.final_t_cab().unwrap_or(f64::NAN),
                log: log.clone(),
            })
        })
        .collect()
}
