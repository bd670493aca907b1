//! Per-step records of a closed-loop run and the energy roll-up.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_string, fmt_f64, write_atomic};
use crate::nmpc::{Bounds, SolveStatus};

pub const LOG_HEADER: [&str; 16] = [
    "time_s",
    "speed_kmh",
    "t_evap_c",
    "w_bl_kgps",
    "dw_bl_kgps",
    "t_evap_targ_c",
    "t_cab_c",
    "t_discharge_c",
    "cop",
    "beta",
    "p_dacp_w",
    "p_dacp_targ_w",
    "p_comp_w",
    "p_edf_w",
    "solve_time_s",
    "solver_status",
];

/// Status column value of PI baseline rows.
pub const BASELINE_STATUS: &str = "pi";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub speed: f64,
    /// Plant state at the start of the step.
    pub t_evap: f64,
    pub w_bl: f64,
    pub t_cab: f64,
    /// Input applied over the step.
    pub dw_bl: f64,
    pub t_evap_targ: f64,
    pub t_discharge: f64,
    pub cop: f64,
    pub beta: f64,
    pub p_dacp: f64,
    /// Unweighted target; the controller tracks `beta · p_dacp_targ`.
    pub p_dacp_targ: f64,
    pub t_evap_max: f64,
    pub p_comp: f64,
    pub p_edf: f64,
    pub solve_time: f64,
    /// `None` for rows produced by the PI baseline.
    pub status: Option<SolveStatus>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub x0_clamped: bool,
}

impl StepRecord {
    pub fn reference(&self) -> f64 {
        self.beta * self.p_dacp_targ
    }

    /// `|P_DACP − β·P_targ| / (β·P_targ)`; absolute error when the reference is 0.
    pub fn tracking_error(&self) -> f64 {
        let r = self.reference();
        let e = (self.p_dacp - r).abs();
        if r > 0.0 {
            e / r
        } else {
            e
        }
    }

    fn status_str(&self) -> &'static str {
        self.status.map_or(BASELINE_STATUS, SolveStatus::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLog {
    /// Sample time, s.
    pub ts: f64,
    pub records: Vec<StepRecord>,
}

impl StepLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV text. Solve times are wall-clock and therefore written as 0
    /// unless `with_solve_time`, which keeps the file reproducible.
    pub fn to_csv(&self, with_solve_time: bool) -> String {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                let st = if with_solve_time { r.solve_time } else { 0.0 };
                let mut row: Vec<String> = [
                    r.time,
                    r.speed,
                    r.t_evap,
                    r.w_bl,
                    r.dw_bl,
                    r.t_evap_targ,
                    r.t_cab,
                    r.t_discharge,
                    r.cop,
                    r.beta,
                    r.p_dacp,
                    r.p_dacp_targ,
                    r.p_comp,
                    r.p_edf,
                    st,
                ]
                .iter()
                .map(|v| fmt_f64(*v))
                .collect();
                row.push(r.status_str().to_owned());
                row
            })
            .collect();
        csv_string(&LOG_HEADER, &rows)
    }

    pub fn write_csv(&self, path: &Path, with_solve_time: bool) -> Result<()> {
        write_atomic(path, self.to_csv(with_solve_time).as_bytes())
    }

    fn after(&self, transient_s: f64) -> impl Iterator<Item = &StepRecord> {
        let t0 = self.records.first().map_or(0.0, |r| r.time);
        self.records
            .iter()
            .filter(move |r| r.time - t0 >= transient_s - 1e-9)
    }

    /// Largest relative tracking error once `transient_s` seconds have passed.
    pub fn max_tracking_error(&self, transient_s: f64) -> f64 {
        self.after(transient_s)
            .map(StepRecord::tracking_error)
            .fold(0.0, f64::max)
    }

    /// Largest excursion of the evaporator temperature outside
    /// `[t_evap_min, t_evap_max]` once `transient_s` seconds have passed.
    pub fn max_t_evap_excursion(&self, t_evap_min: f64, transient_s: f64) -> f64 {
        self.after(transient_s)
            .map(|r| (t_evap_min - r.t_evap).max(r.t_evap - r.t_evap_max).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Steps whose applied input or resulting blower flow leaves the boxes.
    pub fn input_violations(&self, b: &Bounds) -> usize {
        self.records
            .iter()
            .filter(|r| {
                let w_next = r.w_bl + r.dw_bl;
                !(b.dw_bl_min..=b.dw_bl_max).contains(&r.dw_bl)
                    || !(b.t_evap_targ_min..=b.t_evap_targ_max).contains(&r.t_evap_targ)
                    || w_next < b.w_bl_min - 1e-12
                    || w_next > b.w_bl_max + 1e-12
            })
            .count()
    }

    pub fn max_solve_time(&self) -> f64 {
        self.records.iter().map(|r| r.solve_time).fold(0.0, f64::max)
    }

    pub fn fail_safe_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == Some(SolveStatus::FailSafe))
            .count()
    }

    pub fn final_t_cab(&self) -> Option<f64> {
        self.records.last().map(|r| r.t_cab)
    }
}

/// Percentage change of each energy relative to a baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyDeltas {
    pub e_dace: f64,
    pub e_comp: f64,
    pub e_edf: f64,
    pub e_tot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyReport {
    pub e_dace_kj: f64,
    pub e_comp_kj: f64,
    pub e_edf_kj: f64,
    pub e_tot_kj: f64,
    pub deltas_vs_baseline_pct: Option<EnergyDeltas>,
}

fn pct(x: f64, base: f64) -> f64 {
    if base == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(x)
        }
    } else {
        100.0 * (x - base) / base
    }
}

impl EnergyReport {
    pub fn deltas_vs(&self, base: &EnergyReport) -> EnergyDeltas {
        EnergyDeltas {
            e_dace: pct(self.e_dace_kj, base.e_dace_kj),
            e_comp: pct(self.e_comp_kj, base.e_comp_kj),
            e_edf: pct(self.e_edf_kj, base.e_edf_kj),
            e_tot: pct(self.e_tot_kj, base.e_tot_kj),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }
}

/// Rectangular integration of the logged powers, with percentage deltas
/// against `baseline` when given.
pub fn energy_report(log: &StepLog, baseline: Option<&StepLog>) -> Result<EnergyReport> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let ts = log.ts;
    let (mut dace, mut comp, mut edf) = (0.0, 0.0, 0.0);
    for r in &log.records {
        dace += r.p_dacp * ts;
        comp += r.p_comp * ts;
        edf += r.p_edf * ts;
    }
    let mut rep = EnergyReport {
        e_dace_kj: dace / 1e3,
        e_comp_kj: comp / 1e3,
        e_edf_kj: edf / 1e3,
        e_tot_kj: (comp + edf) / 1e3,
        deltas_vs_baseline_pct: None,
    };
    if let Some(b) = baseline {
        let base = energy_report(b, None)?;
        rep.deltas_vs_baseline_pct = Some(rep.deltas_vs(&base));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(p_dacp: f64, p_comp: f64, p_edf: f64) -> StepRecord {
        StepRecord {
            time: 0.0,
            speed: 0.0,
            t_evap: 5.0,
            w_bl: 0.1,
            t_cab: 30.0,
            dw_bl: 0.0,
            t_evap_targ: 3.0,
            t_discharge: 10.0,
            cop: 2.0,
            beta: 1.0,
            p_dacp,
            p_dacp_targ: p_dacp,
            t_evap_max: 10.0,
            p_comp,
            p_edf,
            solve_time: 0.01,
            status: Some(SolveStatus::Converged),
            kkt_residual: 0.0,
            iterations: 1,
            x0_clamped: false,
        }
    }

    #[test]
    fn single_step_energy() {
        let log = StepLog {
            ts: 3.0,
            records: vec![record(1000.0, 500.0, 200.0)],
        };
        let rep = energy_report(&log, None).unwrap();
        assert_eq!(rep.e_dace_kj, 3.0);
        assert_eq!(rep.e_comp_kj, 1.5);
        assert_eq!(rep.e_edf_kj, 0.6);
        assert!((rep.e_tot_kj - 2.1).abs() < 1e-12);
        assert!(rep.deltas_vs_baseline_pct.is_none());
    }

    #[test]
    fn zero_powers_zero_energy_and_empty_log_errors() {
        let log = StepLog {
            ts: 3.0,
            records: vec![record(0.0, 0.0, 0.0); 4],
        };
        let rep = energy_report(&log, Some(&log)).unwrap();
        assert_eq!(rep.e_tot_kj, 0.0);
        assert_eq!(rep.deltas_vs_baseline_pct.unwrap().e_tot, 0.0);
        assert!(matches!(energy_report(&StepLog::default(), None), Err(Error::EmptyLog)));
    }

    #[test]
    fn deltas_against_baseline() {
        let a = StepLog {
            ts: 3.0,
            records: vec![record(1000.0, 450.0, 200.0)],
        };
        let b = StepLog {
            ts: 3.0,
            records: vec![record(1000.0, 500.0, 200.0)],
        };
        let d = energy_report(&a, Some(&b)).unwrap().deltas_vs_baseline_pct.unwrap();
        assert!((d.e_comp + 10.0).abs() < 1e-9);
        assert!((d.e_tot - 100.0 * (-50.0 / 700.0)).abs() < 1e-9);
    }

    #[test]
    fn csv_header_and_masked_solve_time() {
        let log = StepLog {
            ts: 3.0,
            records: vec![record(1000.0, 500.0, 200.0)],
        };
        let text = log.to_csv(false);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LOG_HEADER.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), LOG_HEADER.len());
        assert_eq!(row[14], "0");
        assert_eq!(row[15], "converged");
        assert!(log.to_csv(true).contains(",0.01,"));
    }

    #[test]
    fn tracking_error_uses_weighted_reference() {
        let mut r = record(1100.0, 0.0, 0.0);
        r.p_dacp_targ = 1000.0;
        r.beta = 1.1;
        assert!(r.tracking_error() < 1e-12);
        r.beta = 1.0;
        assert!((r.tracking_error() - 0.1).abs() < 1e-12);
    }
}
