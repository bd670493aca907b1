//! Surrogate closed-loop plant.
//!
//! The A/C loop reuses the predictive model (with its own, possibly
//! perturbed, coefficients); around it sit a lumped cabin heat balance, a
//! speed-dependent COP map and an electric drive fan (EDF) power model.
//! Powers are held over a sample and integrated with the rectangle rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, AcState, ControlInput, ModelParams};

/// Physical blower actuator range, kg/s.
pub const W_BL_PHYSICAL: (f64, f64) = (0.0, 0.3);

/// Measurement noise standard deviations, one per channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSigma {
    pub t_evap: f64,
    pub w_bl: f64,
    pub t_cab: f64,
    pub t_discharge: f64,
    pub cop: f64,
}

impl NoiseSigma {
    pub fn is_zero(&self) -> bool {
        [self.t_evap, self.w_bl, self.t_cab, self.t_discharge, self.cop]
            .iter()
            .all(|s| *s == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub model: ModelParams,
    /// Cabin thermal capacitance, J/K.
    pub c_cab: f64,
    /// Heat load into the cabin, W.
    pub q_load: f64,
    /// COP at standstill.
    pub cop0: f64,
    /// Relative COP gain reached at `v_ref`.
    pub kappa: f64,
    /// km/h
    pub v_ref: f64,
    /// EDF power at standstill, W.
    pub edf0: f64,
    /// EDF power reduction per km/h, W/(km/h).
    pub edf_slope: f64,
    #[serde(default)]
    pub noise_sigma: NoiseSigma,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            model: ModelParams::default(),
            c_cab: 2.2e4,
            q_load: 900.0,
            cop0: 2.2,
            kappa: 0.158,
            v_ref: 90.0,
            edf0: 200.0,
            edf_slope: 0.3,
            noise_sigma: NoiseSigma::default(),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let finite = [
            self.c_cab,
            self.q_load,
            self.cop0,
            self.kappa,
            self.v_ref,
            self.edf0,
            self.edf_slope,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plant parameters"));
        }
        if !(self.c_cab > 0.0) {
            return Err(Error::InvalidParam(format!("c_cab must be > 0, got {}", self.c_cab)));
        }
        if !(self.cop0 > 0.0) {
            return Err(Error::InvalidCop(self.cop0));
        }
        if !(self.v_ref > 0.0) {
            return Err(Error::InvalidParam(format!("v_ref must be > 0, got {}", self.v_ref)));
        }
        // the map is affine up to v_ref, so its extremes are at 0 and v_ref
        if !(1.0 + self.kappa > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kappa = {} makes the COP non-positive",
                self.kappa
            )));
        }
        let s = &self.noise_sigma;
        if [s.t_evap, s.w_bl, s.t_cab, s.t_discharge, s.cop]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidParam("noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// COP(v) = cop0·(1 + κ·min(v, v_ref)/v_ref).
pub fn cop_map(pp: &PlantParams, v: f64) -> f64 {
    pp.cop0 * (1.0 + pp.kappa * v.max(0.0).min(pp.v_ref) / pp.v_ref)
}

/// EDF electrical power, W, clamped at zero.
pub fn edf_power(pp: &PlantParams, v: f64) -> f64 {
    (pp.edf0 - pp.edf_slope * v.max(0.0)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// °C
    pub t_evap: f64,
    /// kg/s
    pub w_bl: f64,
    /// °C
    pub t_cab: f64,
    /// Accumulated energies, J.
    pub e_dace: f64,
    pub e_comp: f64,
    pub e_edf: f64,
}

impl PlantState {
    pub fn new(t_evap: f64, w_bl: f64, t_cab: f64) -> Self {
        PlantState {
            t_evap,
            w_bl,
            t_cab,
            e_dace: 0.0,
            e_comp: 0.0,
            e_edf: 0.0,
        }
    }

    pub fn ac(&self) -> AcState {
        AcState::new(self.t_evap, self.w_bl)
    }

    pub fn e_tot(&self) -> f64 {
        self.e_comp + self.e_edf
    }
}

/// Sensor readings available to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub t_evap: f64,
    pub w_bl: f64,
    pub t_cab: f64,
    pub t_discharge: f64,
    pub cop: f64,
}

/// Powers held over one sample, evaluated at the state the sample starts in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPowers {
    pub t_discharge: f64,
    pub cop: f64,
    pub p_dacp: f64,
    pub p_comp: f64,
    pub p_edf: f64,
}

/// Noise-free readings of a state at speed `v`.
pub fn measure(pp: &PlantParams, s: &PlantState, v: f64) -> Measurements {
    Measurements {
        t_evap: s.t_evap,
        w_bl: s.w_bl,
        t_cab: s.t_cab,
        t_discharge: model::discharge_temp(&pp.model, s.t_evap, s.t_cab),
        cop: cop_map(pp, v),
    }
}

/// Powers drawn while the plant sits in `s` at speed `v`.
pub fn powers(pp: &PlantParams, s: &PlantState, t_amb: f64, v: f64) -> StepPowers {
    let t_discharge = model::discharge_temp(&pp.model, s.t_evap, s.t_cab);
    let t_in = pp.model.air_mode.inlet_temp(s.t_cab, t_amb);
    let p_dacp = model::dacp(pp.model.cp, t_in, t_discharge, s.w_bl);
    let cop = cop_map(pp, v);
    StepPowers {
        t_discharge,
        cop,
        p_dacp,
        p_comp: p_dacp / cop,
        p_edf: edf_power(pp, v),
    }
}

/// Advances the plant by one sample under input `u`.
///
/// Powers are evaluated at the incoming state and held over the sample; the
/// A/C states follow the model recursion (blower flow saturated to the
/// physical actuator range) and the cabin integrates `q_load − P_DACP`.
/// Returns the new state, the held powers and noise-free readings of the
/// new state.
pub fn plant_step(
    pp: &PlantParams,
    s: &PlantState,
    u: &ControlInput,
    t_amb: f64,
    v: f64,
) -> (PlantState, StepPowers, Measurements) {
    let ts = pp.model.ts;
    let pw = powers(pp, s, t_amb, v);
    let next_ac = model::step(&pp.model, &s.ac(), u, t_amb);
    let next = PlantState {
        t_evap: next_ac.t_evap,
        w_bl: next_ac.w_bl.clamp(W_BL_PHYSICAL.0, W_BL_PHYSICAL.1),
        t_cab: s.t_cab + ts / pp.c_cab * (pp.q_load - pw.p_dacp),
        e_dace: s.e_dace + pw.p_dacp * ts,
        e_comp: s.e_comp + pw.p_comp * ts,
        e_edf: s.e_edf + pw.p_edf * ts,
    };
    let meas = measure(pp, &next, v);
    (next, pw, meas)
}

/// A plant instance with its own noise stream.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub state: PlantState,
    rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(params: PlantParams, state: PlantState, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Plant {
            params,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Current readings, with noise if configured.
    pub fn read(&mut self, v: f64) -> Measurements {
        let m = measure(&self.params, &self.state, v);
        self.perturb(m)
    }

    /// Applies `u` for one sample and returns the powers held over it.
    pub fn step(&mut self, u: &ControlInput, t_amb: f64, v: f64) -> StepPowers {
        let (next, pw, _) = plant_step(&self.params, &self.state, u, t_amb, v);
        self.state = next;
        pw
    }

    fn perturb(&mut self, m: Measurements) -> Measurements {
        let s = self.params.noise_sigma;
        if s.is_zero() {
            return m;
        }
        let mut jitter = |x: f64, sigma: f64| {
            if sigma > 0.0 {
                // sigma is validated finite and positive here
                x + Normal::new(0.0, sigma).unwrap().sample(&mut self.rng)
            } else {
                x
            }
        };
        Measurements {
            t_evap: jitter(m.t_evap, s.t_evap),
            w_bl: jitter(m.w_bl, s.w_bl),
            t_cab: jitter(m.t_cab, s.t_cab),
            t_discharge: jitter(m.t_discharge, s.t_discharge),
            cop: jitter(m.cop, s.cop).max(1e-3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cop_map_endpoints() {
        let pp = PlantParams::default();
        assert_eq!(cop_map(&pp, 0.0), pp.cop0);
        assert!((cop_map(&pp, pp.v_ref) - pp.cop0 * (1.0 + pp.kappa)).abs() < 1e-12);
        assert_eq!(cop_map(&pp, 130.0), cop_map(&pp, pp.v_ref));
    }

    #[test]
    fn edf_clamps_at_zero() {
        let pp = PlantParams {
            edf0: 100.0,
            edf_slope: 2.0,
            ..Default::default()
        };
        assert_eq!(edf_power(&pp, 0.0), 100.0);
        assert_eq!(edf_power(&pp, 60.0), 0.0);
    }

    #[test]
    fn balanced_load_keeps_cabin() {
        let mut pp = PlantParams::default();
        let s = PlantState::new(5.0, 0.1, 30.0);
        pp.q_load = powers(&pp, &s, 35.0, 0.0).p_dacp;
        let (next, _, _) = plant_step(&pp, &s, &ControlInput::new(0.0, 5.0), 35.0, 0.0);
        assert_eq!(next.t_cab, 30.0);
    }

    #[test]
    fn cooling_above_load_lowers_cabin() {
        let pp = PlantParams {
            q_load: 100.0,
            ..Default::default()
        };
        let s = PlantState::new(5.0, 0.1, 30.0);
        let (next, pw, _) = plant_step(&pp, &s, &ControlInput::new(0.0, 5.0), 35.0, 0.0);
        assert!(pw.p_dacp > pp.q_load);
        assert!(next.t_cab < s.t_cab);
    }

    #[test]
    fn noise_free_plant_matches_prediction() {
        let pp = PlantParams::default();
        let mut s = PlantState::new(8.0, 0.08, 40.0);
        let mut x = s.ac();
        for k in 0..40 {
            let u = ControlInput::new(0.01 * ((k as f64) * 0.7).sin(), 4.0 + (k % 5) as f64);
            s = plant_step(&pp, &s, &u, 35.0, 20.0).0;
            x = model::step(&pp.model, &x, &u, 35.0);
            assert!((s.t_evap - x.t_evap).abs() < 1e-10);
            assert!((s.w_bl - x.w_bl).abs() < 1e-10);
        }
    }

    #[test]
    fn cabin_is_affine_under_constant_power() {
        // hold the A/C at a fixed point so P_DACP stays constant
        let mut pp = PlantParams::default();
        pp.model.gamma6 = 0.0;
        pp.model.air_mode = model::AirMode::FreshAir;
        let p = &pp.model;
        let (w, t_amb) = (0.1, 35.0);
        let t_targ = 5.0;
        let t_star = (p.gamma1 * t_targ + p.gamma2 * t_amb * w - p.gamma4) / (p.gamma1 + p.gamma2 * w);
        let mut s = PlantState::new(t_star, w, 40.0);
        let p0 = powers(&pp, &s, t_amb, 0.0).p_dacp;
        let slope = (pp.q_load - p0) / pp.c_cab;
        for k in 1..=50 {
            s = plant_step(&pp, &s, &ControlInput::new(0.0, t_targ), t_amb, 0.0).0;
            let want = 40.0 + slope * pp.model.ts * k as f64;
            assert!((s.t_cab - want).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let pp = PlantParams {
            noise_sigma: NoiseSigma {
                t_evap: 0.05,
                t_cab: 0.05,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = PlantState::new(5.0, 0.1, 30.0);
        let mut a = Plant::new(pp, s, 7).unwrap();
        let mut b = Plant::new(pp, s, 7).unwrap();
        let ma = a.read(10.0);
        assert_eq!(ma, b.read(10.0));
        assert_ne!(ma.t_evap, 5.0);
        assert_eq!(ma.w_bl, 0.1);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            PlantParams { c_cab: 0.0, ..Default::default() },
            PlantParams { cop0: -1.0, ..Default::default() },
            PlantParams { kappa: -1.5, ..Default::default() },
        ];
        for pp in bad {
            assert!(pp.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn energy_books_balance(w in 0.05f64..0.15, t in 0.0f64..10.0, v in 0.0f64..130.0, n in 1usize..30) {
            let pp = PlantParams::default();
            let mut s = PlantState::new(t, w, 35.0);
            let mut prev = s;
            for _ in 0..n {
                s = plant_step(&pp, &s, &ControlInput::new(0.0, 5.0), 35.0, v).0;
                prop_assert!(s.e_edf >= prev.e_edf);
                prop_assert_eq!(s.e_tot(), s.e_comp + s.e_edf);
                prev = s;
            }
        }

        #[test]
        fn higher_speed_spends_less_compressor_energy(v in 0.0f64..80.0, dv in 1.0f64..50.0) {
            let pp = PlantParams::default();
            let run = |speed: f64| {
                let mut s = PlantState::new(8.0, 0.1, 40.0);
                for k in 0..20 {
                    let u = ControlInput::new(0.0, 2.0 + (k % 3) as f64);
                    s = plant_step(&pp, &s, &u, 35.0, speed).0;
                }
                s.e_comp
            };
            prop_assert!(run(v + dv) < run(v));
        }

        #[test]
        fn cop_positive_and_monotone(a in 0.0f64..130.0, b in 0.0f64..130.0) {
            let pp = PlantParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(cop_map(&pp, lo) > 0.0);
            prop_assert!(cop_map(&pp, lo) <= cop_map(&pp, hi));
            prop_assert!(edf_power(&pp, lo) >= edf_power(&pp, hi));
        }
    }
}
