//! Simplified A/C predictive model.
//!
//! Two states (evaporator wall temperature and blower mass flow) evolve under
//! two inputs (blower flow increment and evaporator temperature target). The
//! discharge air temperature is an affine read-out of the evaporator and
//! cabin temperatures. All functions here are pure and apply no clamping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Specific heat of air at constant pressure, J/(kg·K).
pub const CP_AIR: f64 = 1008.0;

/// Controller sampling period, s.
pub const SAMPLE_TIME: f64 = 3.0;

/// Identified coefficients for the production A/C loop.
pub const IDENTIFIED_GAMMA: [f64; 7] = [-0.084, -0.487, -1.121, -1.730, 0.729, 0.690, -11.457];

/// Which air stream enters the HVAC box, and hence which temperature the
/// delivered cooling power is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AirMode {
    #[default]
    Recirculation,
    FreshAir,
}

impl AirMode {
    /// Inlet air temperature used in the cooling-power balance.
    pub fn inlet_temp(self, t_cab: f64, t_amb: f64) -> f64 {
        match self {
            AirMode::Recirculation => t_cab,
            AirMode::FreshAir => t_amb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma5: f64,
    pub gamma6: f64,
    pub gamma7: f64,
    /// J/(kg·K)
    pub cp: f64,
    /// s
    pub ts: f64,
    #[serde(default)]
    pub air_mode: AirMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::from_gamma(IDENTIFIED_GAMMA)
    }
}

impl ModelParams {
    pub fn from_gamma(g: [f64; 7]) -> Self {
        ModelParams {
            gamma1: g[0],
            gamma2: g[1],
            gamma3: g[2],
            gamma4: g[3],
            gamma5: g[4],
            gamma6: g[5],
            gamma7: g[6],
            cp: CP_AIR,
            ts: SAMPLE_TIME,
            air_mode: AirMode::Recirculation,
        }
    }

    pub fn gamma(&self) -> [f64; 7] {
        [
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.gamma4,
            self.gamma5,
            self.gamma6,
            self.gamma7,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("model gamma"));
        }
        if !(self.cp > 0.0) {
            return Err(Error::InvalidParam(format!("cp must be > 0, got {}", self.cp)));
        }
        if !(self.ts > 0.0) {
            return Err(Error::InvalidParam(format!("ts must be > 0, got {}", self.ts)));
        }
        let mix = self.gamma5 + self.gamma6;
        if !(mix > 0.0 && mix < 2.0) {
            return Err(Error::InvalidParam(format!(
                "gamma5 + gamma6 = {mix} outside (0, 2)"
            )));
        }
        Ok(())
    }
}

/// Controller-visible A/C state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcState {
    /// °C
    pub t_evap: f64,
    /// kg/s
    pub w_bl: f64,
}

impl AcState {
    pub fn new(t_evap: f64, w_bl: f64) -> Self {
        AcState { t_evap, w_bl }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_evap.is_finite() || !self.w_bl.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if self.w_bl < 0.0 {
            return Err(Error::InvalidParam(format!("w_bl must be >= 0, got {}", self.w_bl)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Per-step blower flow increment, kg/s.
    pub dw_bl: f64,
    /// Evaporator wall temperature target, °C.
    pub t_evap_targ: f64,
}

impl ControlInput {
    pub fn new(dw_bl: f64, t_evap_targ: f64) -> Self {
        ControlInput { dw_bl, t_evap_targ }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dw_bl.is_finite() || !self.t_evap_targ.is_finite() {
            return Err(Error::NonFinite("control input"));
        }
        Ok(())
    }
}

/// Exogenous conditions seen by the A/C loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ambient {
    /// °C
    pub t_cab: f64,
    /// °C
    pub t_amb: f64,
    pub cop: f64,
}

impl Ambient {
    pub fn validate(&self) -> Result<()> {
        if !self.t_cab.is_finite() || !self.t_amb.is_finite() || !self.cop.is_finite() {
            return Err(Error::NonFinite("ambient"));
        }
        if self.cop <= 0.0 {
            return Err(Error::InvalidCop(self.cop));
        }
        Ok(())
    }
}

/// Evaporator wall temperature one sample ahead.
pub fn step_evap(p: &ModelParams, s: &AcState, u: &ControlInput, t_amb: f64) -> f64 {
    let dt_amb = s.t_evap - t_amb;
    s.t_evap
        + p.gamma1 * (s.t_evap - u.t_evap_targ)
        + p.gamma2 * dt_amb * s.w_bl
        + p.gamma3 * dt_amb * u.dw_bl
        + p.gamma4
}

/// [`step_evap`] with finiteness checks on every argument.
pub fn try_step_evap(p: &ModelParams, s: &AcState, u: &ControlInput, amb: &Ambient) -> Result<f64> {
    s.validate()?;
    u.validate()?;
    amb.validate()?;
    Ok(step_evap(p, s, u, amb.t_amb))
}

pub fn step_blower(s: &AcState, u: &ControlInput) -> f64 {
    s.w_bl + u.dw_bl
}

/// Full state update.
pub fn step(p: &ModelParams, s: &AcState, u: &ControlInput, t_amb: f64) -> AcState {
    AcState {
        t_evap: step_evap(p, s, u, t_amb),
        w_bl: step_blower(s, u),
    }
}

pub fn discharge_temp(p: &ModelParams, t_evap: f64, t_cab: f64) -> f64 {
    p.gamma5 * t_evap + p.gamma6 * t_cab + p.gamma7
}

/// Discharge air cooling power, W. Negative when the discharge air is warmer
/// than the inlet air.
pub fn dacp(cp: f64, t_cab: f64, t_discharge: f64, w_bl: f64) -> f64 {
    cp * (t_cab - t_discharge) * w_bl
}

/// Compressor electrical power implied by a cooling power and COP, W.
pub fn compressor_power_estimate(
    cp: f64,
    t_cab: f64,
    t_discharge: f64,
    w_bl: f64,
    cop: f64,
) -> Result<f64> {
    if !(cop > 0.0) {
        return Err(Error::InvalidCop(cop));
    }
    Ok(dacp(cp, t_cab, t_discharge, w_bl) / cop)
}
