//! Receding-horizon controller: tracks a cooling-power target while
//! penalising estimated compressor power.

mod problem;
mod qp;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, AcState, ControlInput, ModelParams};

pub use problem::{build_problem, Problem, CONSTRAINTS_PER_STAGE};
pub use solver::solve;

/// Box limits of the controller. The evaporator upper bound is time-varying
/// and comes from the preview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub t_evap_min: f64,
    pub w_bl_min: f64,
    pub w_bl_max: f64,
    pub dw_bl_min: f64,
    pub dw_bl_max: f64,
    pub t_evap_targ_min: f64,
    pub t_evap_targ_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            t_evap_min: 0.0,
            w_bl_min: 0.05,
            w_bl_max: 0.15,
            dw_bl_min: -0.05,
            dw_bl_max: 0.05,
            t_evap_targ_min: 2.0,
            t_evap_targ_max: 10.0,
        }
    }
}

impl Bounds {
    pub fn clamp_input(&self, u: &ControlInput) -> ControlInput {
        ControlInput {
            dw_bl: u.dw_bl.clamp(self.dw_bl_min, self.dw_bl_max),
            t_evap_targ: u.t_evap_targ.clamp(self.t_evap_targ_min, self.t_evap_targ_max),
        }
    }

    pub fn contains_input(&self, u: &ControlInput) -> bool {
        (self.dw_bl_min..=self.dw_bl_max).contains(&u.dw_bl)
            && (self.t_evap_targ_min..=self.t_evap_targ_max).contains(&u.t_evap_targ)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon, steps.
    pub np: usize,
    /// Tracking weight, 1/W.
    pub alpha: f64,
    pub bounds: Bounds,
    /// KKT tolerance of the solver.
    pub tol: f64,
    /// SQP iteration budget per solve.
    pub max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            np: 10,
            alpha: 1e5,
            bounds: Bounds::default(),
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if self.np < 1 {
            return Err(Error::InvalidParam("np must be >= 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParam(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        let pairs = [
            ("w_bl", b.w_bl_min, b.w_bl_max),
            ("dw_bl", b.dw_bl_min, b.dw_bl_max),
            ("t_evap_targ", b.t_evap_targ_min, b.t_evap_targ_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo <= hi) {
                return Err(Error::InvalidParam(format!("{name} bounds inverted: [{lo}, {hi}]")));
            }
        }
        if !b.t_evap_min.is_finite() {
            return Err(Error::NonFinite("t_evap_min"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParam("solver tolerance and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Exogenous signals over the horizon. Arrays have `np + 1` entries (stages
/// `0..=np`); cabin temperature, ambient temperature and COP are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewWindow {
    /// W
    pub p_dacp_targ: Vec<f64>,
    /// °C
    pub t_evap_max: Vec<f64>,
    pub beta: Vec<f64>,
    pub t_cab: f64,
    pub t_amb: f64,
    pub cop: f64,
}

/// One stage of a [`PreviewWindow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePreview {
    pub p_dacp_targ: f64,
    pub t_evap_max: f64,
    pub beta: f64,
    pub t_cab: f64,
    pub t_amb: f64,
    pub cop: f64,
}

impl PreviewWindow {
    pub fn constant(
        np: usize,
        p_dacp_targ: f64,
        t_evap_max: f64,
        beta: f64,
        t_cab: f64,
        t_amb: f64,
        cop: f64,
    ) -> Self {
        PreviewWindow {
            p_dacp_targ: vec![p_dacp_targ; np + 1],
            t_evap_max: vec![t_evap_max; np + 1],
            beta: vec![beta; np + 1],
            t_cab,
            t_amb,
            cop,
        }
    }

    pub fn validate(&self, np: usize) -> Result<()> {
        for (name, len) in [
            ("p_dacp_targ", self.p_dacp_targ.len()),
            ("t_evap_max", self.t_evap_max.len()),
            ("beta", self.beta.len()),
        ] {
            if len != np + 1 {
                return Err(Error::Dimension(format!(
                    "preview {name} has {len} entries, expected np + 1 = {}",
                    np + 1
                )));
            }
        }
        let finite = self
            .p_dacp_targ
            .iter()
            .chain(&self.t_evap_max)
            .chain(&self.beta)
            .chain([&self.t_cab, &self.t_amb, &self.cop])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("preview"));
        }
        if self.cop <= 0.0 {
            return Err(Error::InvalidCop(self.cop));
        }
        if self.beta.iter().any(|b| *b <= 0.0) {
            return Err(Error::InvalidParam("beta must be > 0".into()));
        }
        Ok(())
    }

    pub fn stage(&self, i: usize) -> StagePreview {
        StagePreview {
            p_dacp_targ: self.p_dacp_targ[i],
            t_evap_max: self.t_evap_max[i],
            beta: self.beta[i],
            t_cab: self.t_cab,
            t_amb: self.t_amb,
            cop: self.cop,
        }
    }
}

/// Stage objective: estimated compressor power plus the weighted squared
/// deviation of cooling power from the β-scaled target. The input does not
/// enter directly; it is accepted for symmetry with the stage recursion.
pub fn stage_cost(
    params: &ModelParams,
    alpha: f64,
    state: &AcState,
    _u: &ControlInput,
    stage: &StagePreview,
) -> f64 {
    let t_in = params.air_mode.inlet_temp(stage.t_cab, stage.t_amb);
    let td = model::discharge_temp(params, state.t_evap, stage.t_cab);
    let p_dacp = model::dacp(params.cp, t_in, td, state.w_bl);
    let resid = p_dacp - stage.beta * stage.p_dacp_targ;
    p_dacp / stage.cop + alpha * resid * resid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleRelaxed,
    /// The solve errored and the shifted previous input was applied.
    FailSafe,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleRelaxed => "infeasible_relaxed",
            SolveStatus::FailSafe => "fail_safe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub u_seq: Vec<ControlInput>,
    /// Predicted states for stages `0..=np`.
    pub states: Vec<AcState>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub iterations: usize,
    /// Wall-clock solve time, s.
    pub solve_time: f64,
    pub status: SolveStatus,
    pub multipliers: Vec<f64>,
    pub x0_clamped: bool,
    pub decision: Vec<f64>,
}

#[derive(Serialize)]
struct SolveDump<'a> {
    decision: &'a [f64],
    cost: f64,
    kkt_residual: f64,
    iterations: usize,
    solve_time: f64,
    status: SolveStatus,
}

impl MpcSolution {
    /// Per-solve diagnostic record as JSON.
    pub fn diagnostic_json(&self) -> String {
        serde_json::to_string_pretty(&SolveDump {
            decision: &self.decision,
            cost: self.cost,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
            solve_time: self.solve_time,
            status: self.status,
        })
        .expect("plain data serialises")
    }

    /// Warm start for the next instant: drop the first move, repeat the last,
    /// and clamp into the input box. Multipliers shift with their stages.
    pub fn shifted(&self, bounds: &Bounds) -> MpcSolution {
        let mut u: Vec<ControlInput> = self.u_seq.iter().skip(1).copied().collect();
        if let Some(last) = self.u_seq.last() {
            u.push(*last);
        }
        let u: Vec<ControlInput> = u.iter().map(|c| bounds.clamp_input(c)).collect();
        let k = CONSTRAINTS_PER_STAGE;
        let mut lam = Vec::with_capacity(self.multipliers.len());
        if self.multipliers.len() >= 2 * k {
            lam.extend(std::iter::repeat(0.0).take(k));
            lam.extend_from_slice(&self.multipliers[2 * k..]);
            let tail = self.multipliers[self.multipliers.len() - k..].to_vec();
            lam.extend(tail);
        }
        MpcSolution {
            u_seq: u,
            multipliers: lam,
            ..self.clone()
        }
    }
}

/// One control instant: solve from the shifted previous solution (or a cold
/// start) and return the first move. A solver error yields the shifted
/// previous first move, flagged [`SolveStatus::FailSafe`].
pub fn mpc_step(
    params: &ModelParams,
    x0: &AcState,
    preview: &PreviewWindow,
    cfg: &MpcConfig,
    prev: Option<&MpcSolution>,
) -> Result<(ControlInput, MpcSolution)> {
    let prob = build_problem(params, x0, preview, cfg)?;
    let warm = prev.map(|p| p.shifted(&cfg.bounds));
    match solve(&prob, warm.as_ref()) {
        Ok(sol) => Ok((sol.u_seq[0], sol)),
        Err(_) => {
            let z = match &warm {
                Some(w) if w.u_seq.len() == cfg.np => prob.decision_from_inputs(&w.u_seq),
                _ => prob.cold_start(),
            };
            let u_seq = prob.inputs_from_decision(&z);
            let sol = MpcSolution {
                states: prob.rollout(&z),
                cost: prob.objective(&z),
                kkt_residual: f64::NAN,
                max_violation: prob.constraints(&z).iter().cloned().fold(0.0, f64::max),
                iterations: 0,
                solve_time: 0.0,
                status: SolveStatus::FailSafe,
                multipliers: vec![0.0; prob.constraint_count()],
                x0_clamped: prob.x0_clamped(),
                decision: z,
                u_seq,
            };
            Ok((sol.u_seq[0], sol))
        }
    }
}
