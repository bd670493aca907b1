//! Closed-loop harness: signals, controller–plant loops, logs and energy
//! accounting.

mod log;
mod run;
mod signals;

pub use log::{energy_report, EnergyDeltas, EnergyReport, StepLog, StepRecord, BASELINE_STATUS, LOG_HEADER};
pub use run::{
    compare, run_baseline, run_closed_loop, sweep_constant_speed, ComparisonRow, PiGains, Scenario,
    ScenarioOptions, SweepPoint,
};
pub use signals::{
    BetaMode, BetaSchedule, DriveCycle, SyntheticTarget, TargetProfile, CYCLE_HEADER, TARGET_HEADER,
};
