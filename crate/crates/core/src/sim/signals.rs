//! Exogenous signals of a closed-loop run: vehicle speed, cooling-power
//! target with evaporator ceiling, and the β weighting schedule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_csv_rows, write_csv_atomic};

pub const CYCLE_HEADER: [&str; 2] = ["time_s", "speed_kmh"];
pub const TARGET_HEADER: [&str; 3] = ["time_s", "p_dacp_targ_w", "t_evap_max_c"];

/// Piecewise-linear interpolation on sorted `xs`, holding the end values.
fn interp(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    match xs.partition_point(|x| *x <= t) {
        0 => ys[0],
        i if i == xs.len() => ys[xs.len() - 1],
        i => {
            let (x0, x1) = (xs[i - 1], xs[i]);
            ys[i - 1] + (ys[i] - ys[i - 1]) * (t - x0) / (x1 - x0)
        }
    }
}

fn check_times(time: &[f64], what: &str) -> Result<()> {
    if time.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParam(format!("{what}: non-finite time")));
    }
    if let Some(w) = time.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam(format!(
            "{what}: time must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Vehicle speed trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveCycle {
    time: Vec<f64>,
    speed: Vec<f64>,
}

impl DriveCycle {
    pub fn new(time: Vec<f64>, speed: Vec<f64>) -> Result<Self> {
        if time.len() != speed.len() {
            return Err(Error::Dimension(format!(
                "drive cycle: {} times vs {} speeds",
                time.len(),
                speed.len()
            )));
        }
        check_times(&time, "drive cycle")?;
        if let Some(v) = speed.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParam(format!("drive cycle: speed must be >= 0, got {v}")));
        }
        Ok(DriveCycle { time, speed })
    }

    /// Constant speed from 0 to `duration` seconds.
    pub fn constant(speed: f64, duration: f64) -> Result<Self> {
        Self::new(vec![0.0, duration], vec![speed, speed])
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_csv_rows(path, &CYCLE_HEADER)?;
        let (time, speed) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::new(time, speed).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .time
            .iter()
            .zip(&self.speed)
            .map(|(t, v)| vec![fmt_f64(*t), fmt_f64(*v)])
            .collect();
        write_csv_atomic(path, &CYCLE_HEADER, &rows)
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn start(&self) -> f64 {
        self.time.first().copied().unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        match (self.time.first(), self.time.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Speed at absolute time `t`; the final sample is held past the end.
    pub fn speed_at(&self, t: f64) -> f64 {
        if self.time.is_empty() {
            return 0.0;
        }
        interp(&self.time, &self.speed, t)
    }

    /// Number of whole control periods the cycle spans.
    pub fn steps(&self, ts: f64) -> usize {
        if self.time.len() < 2 {
            return 0;
        }
        (self.duration() / ts + 1e-9).floor() as usize
    }

    /// Speeds on the control grid `start + k·ts`, `k < steps(ts)`.
    pub fn resample(&self, ts: f64) -> Vec<f64> {
        (0..self.steps(ts))
            .map(|k| self.speed_at(self.start() + k as f64 * ts))
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.speed.iter().cloned().fold(0.0, f64::max)
    }
}

/// Parameters of the exponential pull-down target
/// `P(t) = P_ss + (P_0 − P_ss)·exp(−t/τ)` with a constant evaporator ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTarget {
    pub p0_w: f64,
    pub p_ss_w: f64,
    pub tau_s: f64,
    pub t_evap_max_c: f64,
}

impl Default for SyntheticTarget {
    fn default() -> Self {
        SyntheticTarget {
            p0_w: 3500.0,
            p_ss_w: 1500.0,
            tau_s: 120.0,
            t_evap_max_c: 10.0,
        }
    }
}

impl SyntheticTarget {
    pub fn power_at(&self, t: f64) -> f64 {
        self.p_ss_w + (self.p0_w - self.p_ss_w) * (-t / self.tau_s).exp()
    }
}

/// Cooling-power target and evaporator temperature ceiling over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetProfile {
    time: Vec<f64>,
    p_dacp_targ: Vec<f64>,
    t_evap_max: Vec<f64>,
}

impl TargetProfile {
    pub fn new(time: Vec<f64>, p_dacp_targ: Vec<f64>, t_evap_max: Vec<f64>) -> Result<Self> {
        if time.len() != p_dacp_targ.len() || time.len() != t_evap_max.len() {
            return Err(Error::Dimension("target profile columns differ in length".into()));
        }
        check_times(&time, "target profile")?;
        if p_dacp_targ.iter().chain(&t_evap_max).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParam(
                "target profile: p_dacp_targ and t_evap_max must be >= 0".into(),
            ));
        }
        Ok(TargetProfile {
            time,
            p_dacp_targ,
            t_evap_max,
        })
    }

    /// Samples `spec` every `ts` seconds on `[0, duration]`.
    pub fn synthetic(spec: &SyntheticTarget, duration: f64, ts: f64) -> Result<Self> {
        if !(spec.tau_s > 0.0) {
            return Err(Error::InvalidParam(format!("tau_s must be > 0, got {}", spec.tau_s)));
        }
        let n = (duration / ts + 1e-9).floor() as usize;
        let mut time: Vec<f64> = (0..=n).map(|k| k as f64 * ts).collect();
        if duration - time[n] > 1e-9 {
            time.push(duration);
        }
        let p = time.iter().map(|t| spec.power_at(*t)).collect();
        let tmax = vec![spec.t_evap_max_c; time.len()];
        Self::new(time, p, tmax)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_csv_rows(path, &TARGET_HEADER)?;
        let mut cols = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            cols.0.push(r[0]);
            cols.1.push(r[1]);
            cols.2.push(r[2]);
        }
        Self::new(cols.0, cols.1, cols.2).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = (0..self.time.len())
            .map(|i| {
                vec![
                    fmt_f64(self.time[i]),
                    fmt_f64(self.p_dacp_targ[i]),
                    fmt_f64(self.t_evap_max[i]),
                ]
            })
            .collect();
        write_csv_atomic(path, &TARGET_HEADER, &rows)
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// `(p_dacp_targ, t_evap_max)` at `t`, holding the end samples.
    pub fn at(&self, t: f64) -> (f64, f64) {
        (
            interp(&self.time, &self.p_dacp_targ, t),
            interp(&self.time, &self.t_evap_max, t),
        )
    }

    /// First and last sample times.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.time.first()?, *self.time.last()?))
    }

    /// Errors unless the profile spans `[t0, t1]`.
    pub fn check_covers(&self, t0: f64, t1: f64) -> Result<()> {
        match (self.time.first(), self.time.last()) {
            (Some(a), Some(b)) if *a <= t0 + 1e-9 && *b >= t1 - 1e-9 => Ok(()),
            (Some(a), Some(b)) => Err(Error::Coverage(format!(
                "targets span [{a}, {b}] s but the run needs [{t0}, {t1}] s"
            ))),
            _ => Err(Error::Coverage("target profile is empty".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Constant,
    SpeedDependent,
}

/// β as a function of speed: 1 in constant mode, otherwise a clamped
/// piecewise-linear table of `[speed_kmh, beta]` breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    pub mode: BetaMode,
    pub breakpoints: Vec<[f64; 2]>,
    /// Rescale the table so β averages to 1 over the drive cycle.
    pub normalize: bool,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            mode: BetaMode::SpeedDependent,
            breakpoints: vec![[0.0, 0.85], [30.0, 0.95], [60.0, 1.05], [90.0, 1.15]],
            normalize: true,
        }
    }
}

impl BetaSchedule {
    pub fn constant() -> Self {
        BetaSchedule {
            mode: BetaMode::Constant,
            ..Default::default()
        }
    }

    pub fn with_mode(&self, mode: BetaMode) -> Self {
        BetaSchedule {
            mode,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == BetaMode::Constant {
            return Ok(());
        }
        if self.breakpoints.is_empty() {
            return Err(Error::EmptyBetaTable);
        }
        let speeds: Vec<f64> = self.breakpoints.iter().map(|b| b[0]).collect();
        check_times(&speeds, "beta table speeds")?;
        for w in self.breakpoints.windows(2) {
            if w[1][1] < w[0][1] {
                return Err(Error::InvalidParam("beta must be non-decreasing in speed".into()));
            }
        }
        if let Some(b) = self.breakpoints.iter().find(|b| !(b[1].is_finite() && b[1] > 0.0)) {
            return Err(Error::InvalidParam(format!("beta must be > 0, got {}", b[1])));
        }
        Ok(())
    }

    /// β at speed `v` from the table as stored (normalisation is applied by
    /// [`BetaSchedule::normalized_for`]).
    pub fn beta_of_speed(&self, v: f64) -> Result<f64> {
        match self.mode {
            BetaMode::Constant => Ok(1.0),
            BetaMode::SpeedDependent => {
                if self.breakpoints.is_empty() {
                    return Err(Error::EmptyBetaTable);
                }
                let xs: Vec<f64> = self.breakpoints.iter().map(|b| b[0]).collect();
                let ys: Vec<f64> = self.breakpoints.iter().map(|b| b[1]).collect();
                Ok(interp(&xs, &ys, v))
            }
        }
    }

    /// Applies the normalisation flag against the grid speeds of a cycle:
    /// the returned table averages to exactly 1 over `speeds`.
    pub fn normalized_for(&self, speeds: &[f64]) -> Result<BetaSchedule> {
        self.validate()?;
        if self.mode == BetaMode::Constant || !self.normalize || speeds.is_empty() {
            return Ok(self.clone());
        }
        let mut sum = 0.0;
        for v in speeds {
            sum += self.beta_of_speed(*v)?;
        }
        let scale = speeds.len() as f64 / sum;
        Ok(BetaSchedule {
            mode: self.mode,
            breakpoints: self.breakpoints.iter().map(|b| [b[0], b[1] * scale]).collect(),
            normalize: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_holds_ends() {
        let c = DriveCycle::new(vec![0.0, 10.0, 20.0], vec![0.0, 50.0, 30.0]).unwrap();
        assert_eq!(c.speed_at(-5.0), 0.0);
        assert_eq!(c.speed_at(5.0), 25.0);
        assert_eq!(c.speed_at(15.0), 40.0);
        assert_eq!(c.speed_at(99.0), 30.0);
    }

    #[test]
    fn resample_to_grid() {
        let c = DriveCycle::new(vec![0.0, 10.0], vec![0.0, 100.0]).unwrap();
        assert_eq!(c.steps(3.0), 3);
        assert_eq!(c.resample(3.0), vec![0.0, 30.0, 60.0]);
        let single = DriveCycle::new(vec![0.0], vec![10.0]).unwrap();
        assert_eq!(single.steps(3.0), 0);
    }

    #[test]
    fn cycle_rejects_bad_input() {
        assert!(DriveCycle::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(DriveCycle::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(DriveCycle::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = DriveCycle::new(vec![0.0, 1.5, 4.0], vec![0.0, 12.25, 3.0]).unwrap();
        c.write_csv(&p).unwrap();
        assert_eq!(DriveCycle::read_csv(&p).unwrap(), c);
        std::fs::write(&p, "t,v\n0,1\n").unwrap();
        assert!(matches!(DriveCycle::read_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn synthetic_target_shape() {
        let spec = SyntheticTarget::default();
        let tp = TargetProfile::synthetic(&spec, 600.0, 3.0).unwrap();
        let (p0, tmax) = tp.at(0.0);
        assert_eq!(p0, spec.p0_w);
        assert_eq!(tmax, spec.t_evap_max_c);
        let (p_tau, _) = tp.at(spec.tau_s);
        let want = spec.p_ss_w + (spec.p0_w - spec.p_ss_w) / std::f64::consts::E;
        assert!((p_tau - want).abs() < 1e-9);
        assert!(tp.check_covers(0.0, 600.0).is_ok());
        assert!(matches!(tp.check_covers(0.0, 700.0), Err(Error::Coverage(_))));
    }

    #[test]
    fn beta_examples() {
        let s = BetaSchedule::default();
        assert_eq!(s.beta_of_speed(0.0).unwrap(), 0.85);
        assert!((s.beta_of_speed(90.0).unwrap() - 1.15).abs() < 1e-12);
        assert!((s.beta_of_speed(45.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((s.beta_of_speed(200.0).unwrap() - 1.15).abs() < 1e-12);
        assert_eq!(BetaSchedule::constant().beta_of_speed(55.0).unwrap(), 1.0);
    }

    #[test]
    fn normalization_gives_unit_mean() {
        let speeds: Vec<f64> = (0..200).map(|k| 40.0 + 35.0 * (k as f64 * 0.05).sin()).collect();
        let n = BetaSchedule::default().normalized_for(&speeds).unwrap();
        let mean: f64 = speeds.iter().map(|v| n.beta_of_speed(*v).unwrap()).sum::<f64>() / speeds.len() as f64;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_or_decreasing_table_rejected() {
        let mut s = BetaSchedule::default();
        s.breakpoints.clear();
        assert!(matches!(s.beta_of_speed(10.0), Err(Error::EmptyBetaTable)));
        assert!(matches!(s.validate(), Err(Error::EmptyBetaTable)));
        let mut s = BetaSchedule::default();
        s.breakpoints[1][1] = 0.5;
        assert!(s.validate().is_err());
    }
}
