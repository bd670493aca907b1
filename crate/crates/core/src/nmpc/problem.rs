//! Single-shooting transcription of the tracking/energy NMPC problem.
//!
//! Decision vector layout: `[dw_bl(0..np), t_evap_targ(0..np)]`. States are
//! eliminated by forward recursion; the objective sums the stage cost over
//! stages `0..=np`, the terminal stage holding the last input.

use crate::error::{Error, Result};
use crate::model::{self, AcState, ControlInput, ModelParams};

use super::{stage_cost, MpcConfig, PreviewWindow, StagePreview};

/// Constraints per predicted stage: T_evap lower/upper, W_bl lower/upper.
pub const CONSTRAINTS_PER_STAGE: usize = 4;

/// Scaling applied to blower-flow constraint rows, kg/s.
const W_SCALE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Problem {
    pub(crate) params: ModelParams,
    pub(crate) x0: AcState,
    pub(crate) x0_raw: AcState,
    pub(crate) x0_clamped: bool,
    pub(crate) preview: PreviewWindow,
    pub(crate) cfg: MpcConfig,
}

/// Builds the NLP for one control instant. An initial state outside the
/// state bounds is clamped into them for prediction and flagged.
pub fn build_problem(
    params: &ModelParams,
    x0: &AcState,
    preview: &PreviewWindow,
    cfg: &MpcConfig,
) -> Result<Problem> {
    cfg.validate()?;
    params.validate()?;
    if !x0.t_evap.is_finite() || !x0.w_bl.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    preview.validate(cfg.np)?;
    let b = &cfg.bounds;
    let t_hi = preview.t_evap_max[0].max(b.t_evap_min);
    let clamped = AcState {
        t_evap: x0.t_evap.clamp(b.t_evap_min, t_hi),
        w_bl: x0.w_bl.clamp(b.w_bl_min, b.w_bl_max),
    };
    Ok(Problem {
        params: *params,
        x0: clamped,
        x0_raw: *x0,
        x0_clamped: clamped != *x0,
        preview: preview.clone(),
        cfg: cfg.clone(),
    })
}

impl Problem {
    pub fn np(&self) -> usize {
        self.cfg.np
    }

    pub fn decision_dim(&self) -> usize {
        2 * self.cfg.np
    }

    /// Number of (lower, upper) state-bound pairs over stages `0..=np`.
    pub fn state_constraint_pairs(&self) -> usize {
        2 * (self.cfg.np + 1)
    }

    pub fn constraint_count(&self) -> usize {
        CONSTRAINTS_PER_STAGE * (self.cfg.np + 1)
    }

    pub fn x0(&self) -> AcState {
        self.x0
    }

    pub fn x0_raw(&self) -> AcState {
        self.x0_raw
    }

    pub fn x0_clamped(&self) -> bool {
        self.x0_clamped
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn preview(&self) -> &PreviewWindow {
        &self.preview
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lower(&self) -> Vec<f64> {
        let b = &self.cfg.bounds;
        let n = self.cfg.np;
        let mut v = vec![b.dw_bl_min; n];
        v.extend(std::iter::repeat(b.t_evap_targ_min).take(n));
        v
    }

    pub fn upper(&self) -> Vec<f64> {
        let b = &self.cfg.bounds;
        let n = self.cfg.np;
        let mut v = vec![b.dw_bl_max; n];
        v.extend(std::iter::repeat(b.t_evap_targ_max).take(n));
        v
    }

    pub fn input(&self, z: &[f64], i: usize) -> ControlInput {
        let n = self.cfg.np;
        let i = i.min(n - 1);
        ControlInput::new(z[i], z[n + i])
    }

    pub fn decision_from_inputs(&self, u: &[ControlInput]) -> Vec<f64> {
        let mut z: Vec<f64> = u.iter().map(|c| c.dw_bl).collect();
        z.extend(u.iter().map(|c| c.t_evap_targ));
        z
    }

    pub fn inputs_from_decision(&self, z: &[f64]) -> Vec<ControlInput> {
        (0..self.cfg.np).map(|i| self.input(z, i)).collect()
    }

    /// Cold start: no blower change, evaporator target at mid-range.
    pub fn cold_start(&self) -> Vec<f64> {
        let b = &self.cfg.bounds;
        let mid = 0.5 * (b.t_evap_targ_min + b.t_evap_targ_max);
        let n = self.cfg.np;
        let mut z = vec![0.0_f64.clamp(b.dw_bl_min, b.dw_bl_max); n];
        z.extend(std::iter::repeat(mid).take(n));
        z
    }

    pub fn stage(&self, i: usize) -> StagePreview {
        self.preview.stage(i)
    }

    /// Predicted states for stages `0..=np`.
    pub fn rollout(&self, z: &[f64]) -> Vec<AcState> {
        let n = self.cfg.np;
        let t_amb = self.preview.t_amb;
        let mut xs = Vec::with_capacity(n + 1);
        let mut x = self.x0;
        xs.push(x);
        for i in 0..n {
            x = model::step(&self.params, &x, &self.input(z, i), t_amb);
            xs.push(x);
        }
        xs
    }

    fn inlet(&self) -> f64 {
        self.params
            .air_mode
            .inlet_temp(self.preview.t_cab, self.preview.t_amb)
    }

    /// Predicted cooling power at each stage.
    pub fn predicted_dacp(&self, xs: &[AcState]) -> Vec<f64> {
        let t_in = self.inlet();
        xs.iter()
            .map(|x| {
                let td = model::discharge_temp(&self.params, x.t_evap, self.preview.t_cab);
                model::dacp(self.params.cp, t_in, td, x.w_bl)
            })
            .collect()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let xs = self.rollout(z);
        (0..=self.cfg.np)
            .map(|i| stage_cost(&self.params, self.cfg.alpha, &xs[i], &self.input(z, i), &self.stage(i)))
            .sum()
    }

    /// Σ (P_DACP − β·P_DACP,targ)² over stages `0..=np`.
    pub fn tracking_sse(&self, z: &[f64]) -> f64 {
        let xs = self.rollout(z);
        self.predicted_dacp(&xs)
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = self.stage(i);
                (p - s.beta * s.p_dacp_targ).powi(2)
            })
            .sum()
    }

    /// Objective and its gradient by a backward adjoint sweep.
    pub fn objective_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let n = self.cfg.np;
        let p = &self.params;
        let t_amb = self.preview.t_amb;
        let t_cab = self.preview.t_cab;
        let t_in = self.inlet();
        let xs = self.rollout(z);

        let mut cost = 0.0;
        // dJ/dT_i and dJ/dW_i from the stage term alone
        let mut d_t = vec![0.0; n + 1];
        let mut d_w = vec![0.0; n + 1];
        for (i, x) in xs.iter().enumerate() {
            let s = self.stage(i);
            let td = model::discharge_temp(p, x.t_evap, t_cab);
            let dacp = model::dacp(p.cp, t_in, td, x.w_bl);
            let resid = dacp - s.beta * s.p_dacp_targ;
            cost += dacp / s.cop + self.cfg.alpha * resid * resid;
            let dl_dp = 1.0 / s.cop + 2.0 * self.cfg.alpha * resid;
            d_t[i] = dl_dp * (-p.cp * p.gamma5 * x.w_bl);
            d_w[i] = dl_dp * p.cp * (t_in - td);
        }

        let mut grad = vec![0.0; 2 * n];
        let mut lam_t = d_t[n];
        let mut lam_w = d_w[n];
        for i in (0..n).rev() {
            let x = &xs[i];
            let u = self.input(z, i);
            let d_amb = x.t_evap - t_amb;
            grad[i] = lam_t * p.gamma3 * d_amb + lam_w;
            grad[n + i] = -p.gamma1 * lam_t;
            let a = 1.0 + p.gamma1 + p.gamma2 * x.w_bl + p.gamma3 * u.dw_bl;
            let b = p.gamma2 * d_amb;
            let next_t = d_t[i] + lam_t * a;
            let next_w = d_w[i] + lam_t * b + lam_w;
            lam_t = next_t;
            lam_w = next_w;
        }
        (cost, grad)
    }

    /// State constraints `c(z) ≤ 0`, four per stage: `-T`, `T - T̄`,
    /// `(W_min - W)/0.1`, `(W - W_max)/0.1`. Temperature rows are in °C.
    pub fn constraints(&self, z: &[f64]) -> Vec<f64> {
        let xs = self.rollout(z);
        let b = &self.cfg.bounds;
        let mut c = Vec::with_capacity(self.constraint_count());
        for (i, x) in xs.iter().enumerate() {
            c.push(b.t_evap_min - x.t_evap);
            c.push(x.t_evap - self.preview.t_evap_max[i]);
            c.push((b.w_bl_min - x.w_bl) / W_SCALE);
            c.push((x.w_bl - b.w_bl_max) / W_SCALE);
        }
        c
    }

    /// Row-major Jacobian of [`Problem::constraints`], `m × n`.
    pub fn constraint_jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let n = self.cfg.np;
        let dim = 2 * n;
        let p = &self.params;
        let t_amb = self.preview.t_amb;
        let xs = self.rollout(z);
        let mut s_t = vec![0.0; dim];
        let mut s_w = vec![0.0; dim];
        let mut rows = Vec::with_capacity(self.constraint_count());
        for i in 0..=n {
            rows.push(s_t.iter().map(|v| -v).collect());
            rows.push(s_t.clone());
            rows.push(s_w.iter().map(|v| -v / W_SCALE).collect());
            rows.push(s_w.iter().map(|v| v / W_SCALE).collect());
            if i == n {
                break;
            }
            let x = &xs[i];
            let u = self.input(z, i);
            let d_amb = x.t_evap - t_amb;
            let a = 1.0 + p.gamma1 + p.gamma2 * x.w_bl + p.gamma3 * u.dw_bl;
            let b = p.gamma2 * d_amb;
            let mut nt: Vec<f64> = s_t.iter().zip(&s_w).map(|(st, sw)| a * st + b * sw).collect();
            nt[i] += p.gamma3 * d_amb;
            nt[n + i] += -p.gamma1;
            s_w[i] += 1.0;
            s_t = nt;
        }
        rows
    }

    /// Objective magnitude used to normalise it inside the solver: the
    /// compressor-power sum plus the tracking penalty at a 1 % residual.
    pub fn cost_scale(&self) -> f64 {
        let s: f64 = (0..=self.cfg.np)
            .map(|i| {
                let st = self.stage(i);
                let reference = (st.beta * st.p_dacp_targ).abs();
                reference / st.cop + self.cfg.alpha * (0.01 * reference).powi(2)
            })
            .sum();
        s.max(1.0)
    }
}
