//! Run configuration document (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::ModelParams;
use crate::nmpc::MpcConfig;
use crate::plant::PlantParams;
use crate::sim::{BetaSchedule, DriveCycle, PiGains, ScenarioOptions, SyntheticTarget, TargetProfile};

pub const SCHEMA_VERSION: u32 = 1;

/// Optional input files. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPaths {
    pub cycle: Option<PathBuf>,
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Controller's prediction model.
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub beta: BetaSchedule,
    #[serde(default)]
    pub baseline: PiGains,
    #[serde(default)]
    pub scenario: ScenarioOptions,
    /// Target used when no target file is given.
    #[serde(default)]
    pub synthetic_target: SyntheticTarget,
    /// Run length of constant-speed sweeps, s.
    #[serde(default = "default_sweep_duration")]
    pub sweep_duration_s: f64,
    #[serde(default)]
    pub paths: InputPaths,
}

fn default_sweep_duration() -> f64 {
    600.0
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelParams::default(),
            plant: PlantParams::default(),
            mpc: MpcConfig::default(),
            beta: BetaSchedule::default(),
            baseline: PiGains::default(),
            scenario: ScenarioOptions::default(),
            synthetic_target: SyntheticTarget::default(),
            sweep_duration_s: default_sweep_duration(),
            paths: InputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads, validates and resolves relative input paths; referenced files
    /// must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.cycle, &mut cfg.paths.targets].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.plant.validate()?;
        self.mpc.validate()?;
        self.beta.validate()?;
        self.scenario.validate()?;
        if !(self.sweep_duration_s > 0.0) {
            return Err(Error::Config("sweep_duration_s must be > 0".into()));
        }
        TargetProfile::synthetic(&self.synthetic_target, 1.0, self.plant.model.ts)?;
        let g = &self.baseline;
        if ![g.kp, g.ki, g.t_evap_targ].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("baseline gains"));
        }
        Ok(())
    }

    /// Target file when configured, otherwise the synthetic target sampled
    /// up to `until` seconds.
    pub fn targets(&self, file: Option<&Path>, until: f64) -> Result<TargetProfile> {
        match file.or(self.paths.targets.as_deref()) {
            Some(p) => TargetProfile::read_csv(p),
            None => TargetProfile::synthetic(&self.synthetic_target, until.max(0.0), self.plant.model.ts),
        }
    }

    pub fn cycle(&self, file: Option<&Path>) -> Result<DriveCycle> {
        match file.or(self.paths.cycle.as_deref()) {
            Some(p) => DriveCycle::read_csv(p),
            None => Err(Error::Config("no drive cycle given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "bogus": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "plant": {"c_cab": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 2}"#).is_err());
        assert_eq!(RunConfig::from_json(r#"{"schema_version": 1}"#).unwrap(), RunConfig::default());
    }

    #[test]
    fn invalid_embedded_values_rejected() {
        let mut c = RunConfig::default();
        c.plant.c_cab = -1.0;
        assert!(RunConfig::from_json(&c.to_json()).is_err());
        let mut c = RunConfig::default();
        c.beta.breakpoints.clear();
        assert!(matches!(RunConfig::from_json(&c.to_json()), Err(Error::EmptyBetaTable)));
    }

    #[test]
    fn missing_referenced_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.paths.cycle = Some("nope.csv".into());
        let p = dir.path().join("cfg.json");
        c.save(&p).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Config(_))));
        DriveCycle::constant(10.0, 30.0).unwrap().write_csv(&dir.path().join("nope.csv")).unwrap();
        let loaded = RunConfig::load(&p).unwrap();
        assert_eq!(loaded.paths.cycle.unwrap(), dir.path().join("nope.csv"));
    }
}
