//! Least-squares identification of the predictive model coefficients.
//!
//! The evaporator update is linear in (γ₁, γ₂, γ₃, γ₄) once the states are
//! measured, and the discharge read-out is linear in (γ₅, γ₆, γ₇), so both
//! blocks are fitted independently with a QR-based least-squares solve.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{self, AcState, ControlInput, ModelParams};

/// Fewest records accepted by the fit (one per unknown coefficient).
pub const MIN_RECORDS: usize = 7;

/// Regressor matrices above this 2-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e8;

const DYN_COLUMNS: [&str; 4] = [
    "gamma1 (t_evap - t_evap_targ)",
    "gamma2 ((t_evap - t_amb) * w_bl)",
    "gamma3 ((t_evap - t_amb) * dw_bl)",
    "gamma4 (constant)",
];
const OUT_COLUMNS: [&str; 3] = ["gamma5 (t_evap)", "gamma6 (t_cab)", "gamma7 (constant)"];

/// One identification sample pair: signals at step k plus the evaporator
/// temperature at k+1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdRecord {
    pub t_evap: f64,
    pub t_evap_targ: f64,
    pub t_amb: f64,
    pub t_cab: f64,
    pub t_discharge: f64,
    pub w_bl: f64,
    pub dw_bl: f64,
    pub t_evap_next: f64,
}

impl IdRecord {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.t_evap,
            self.t_evap_targ,
            self.t_amb,
            self.t_cab,
            self.t_discharge,
            self.w_bl,
            self.dw_bl,
            self.t_evap_next,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("identification record"));
        }
        if !(0.0..=1.0).contains(&self.w_bl) {
            return Err(Error::InvalidParam(format!(
                "w_bl {} outside [0, 1] kg/s",
                self.w_bl
            )));
        }
        Ok(())
    }

    /// Row of the evaporator-dynamics regression.
    pub fn dyn_row(&self) -> [f64; 4] {
        let d_amb = self.t_evap - self.t_amb;
        [
            self.t_evap - self.t_evap_targ,
            d_amb * self.w_bl,
            d_amb * self.dw_bl,
            1.0,
        ]
    }

    pub fn dyn_response(&self) -> f64 {
        self.t_evap_next - self.t_evap
    }

    /// Row of the discharge-temperature regression.
    pub fn out_row(&self) -> [f64; 3] {
        [self.t_evap, self.t_cab, 1.0]
    }
}

/// One row of an identification dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdSample {
    pub time_s: f64,
    pub t_evap_c: f64,
    pub t_evap_targ_c: f64,
    pub t_amb_c: f64,
    pub t_cab_c: f64,
    pub t_discharge_c: f64,
    pub w_bl_kgps: f64,
    pub dw_bl_kgps: f64,
}

pub const DATASET_HEADER: [&str; 8] = [
    "time_s",
    "t_evap_c",
    "t_evap_targ_c",
    "t_amb_c",
    "t_cab_c",
    "t_discharge_c",
    "w_bl_kgps",
    "dw_bl_kgps",
];

/// Pairs consecutive samples into records; the last sample only supplies
/// `t_evap_next` for its predecessor.
pub fn records_from_samples(samples: &[IdSample]) -> Vec<IdRecord> {
    samples
        .windows(2)
        .map(|w| IdRecord {
            t_evap: w[0].t_evap_c,
            t_evap_targ: w[0].t_evap_targ_c,
            t_amb: w[0].t_amb_c,
            t_cab: w[0].t_cab_c,
            t_discharge: w[0].t_discharge_c,
            w_bl: w[0].w_bl_kgps,
            dw_bl: w[0].dw_bl_kgps,
            t_evap_next: w[1].t_evap_c,
        })
        .collect()
}

pub fn read_dataset(path: &Path) -> Result<Vec<IdSample>> {
    let rows = io::read_csv_rows(path, &DATASET_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| IdSample {
            time_s: r[0],
            t_evap_c: r[1],
            t_evap_targ_c: r[2],
            t_amb_c: r[3],
            t_cab_c: r[4],
            t_discharge_c: r[5],
            w_bl_kgps: r[6],
            dw_bl_kgps: r[7],
        })
        .collect())
}

pub fn write_dataset(path: &Path, samples: &[IdSample]) -> Result<()> {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            [
                s.time_s,
                s.t_evap_c,
                s.t_evap_targ_c,
                s.t_amb_c,
                s.t_cab_c,
                s.t_discharge_c,
                s.w_bl_kgps,
                s.dw_bl_kgps,
            ]
            .iter()
            .map(|v| io::fmt_f64(*v))
            .collect()
        })
        .collect();
    io::write_csv_atomic(path, &DATASET_HEADER, &rows)
}

#[derive(Debug, Clone)]
pub struct Regressors {
    pub a_dyn: DMatrix<f64>,
    pub b_dyn: DVector<f64>,
    pub a_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

pub fn build_regressors(records: &[IdRecord]) -> Result<Regressors> {
    if records.len() < MIN_RECORDS {
        return Err(Error::TooFewRecords {
            needed: MIN_RECORDS,
            got: records.len(),
        });
    }
    regressors_unchecked(records)
}

fn regressors_unchecked(records: &[IdRecord]) -> Result<Regressors> {
    for r in records {
        r.validate()?;
    }
    let n = records.len();
    let a_dyn = DMatrix::from_fn(n, 4, |i, j| records[i].dyn_row()[j]);
    let b_dyn = DVector::from_iterator(n, records.iter().map(IdRecord::dyn_response));
    let a_out = DMatrix::from_fn(n, 3, |i, j| records[i].out_row()[j]);
    let b_out = DVector::from_iterator(n, records.iter().map(|r| r.t_discharge));
    Ok(Regressors {
        a_dyn,
        b_dyn,
        a_out,
        b_out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    /// One-step ΔT_evap residual RMSE, °C.
    pub rmse_devap: f64,
    /// Discharge temperature residual RMSE, °C.
    pub rmse_tdis: f64,
    pub condition_number: f64,
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least squares through a Householder QR of `a`; `a` must have full column
/// rank.
fn qr_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.ncols();
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.columns(0, n)
        .rows(0, n)
        .into_owned()
        .solve_upper_triangular(&qtb.rows(0, n).into_owned())
}

/// Columns that are (numerically) zero or lie in the span of the others.
fn weak_columns(a: &DMatrix<f64>, names: &[&str]) -> Vec<String> {
    let nonzero: Vec<usize> = (0..a.ncols())
        .filter(|&j| a.column(j).iter().any(|v| *v != 0.0))
        .collect();
    let mut out = Vec::new();
    let mut best = (f64::INFINITY, 0usize);
    for j in 0..a.ncols() {
        let col = a.column(j).into_owned();
        let rel = if !nonzero.contains(&j) {
            0.0
        } else {
            let idx: Vec<usize> = nonzero.iter().copied().filter(|&k| k != j).collect();
            if idx.is_empty() {
                1.0
            } else {
                let others = a.select_columns(idx.iter());
                match others.clone().svd(true, true).solve(&col, 1e-12) {
                    Ok(x) => (&col - &others * x).norm() / col.norm(),
                    Err(_) => 0.0,
                }
            }
        };
        if rel < best.0 {
            best = (rel, j);
        }
        if rel < 1e-7 {
            out.push(names[j].to_string());
        }
    }
    if out.is_empty() {
        out.push(names[best.1].to_string());
    }
    out
}

fn check_rank(a: &DMatrix<f64>, names: &[&str]) -> Result<f64> {
    let cond = condition_number(a);
    let zero_col = (0..a.ncols()).any(|j| a.column(j).iter().all(|v| *v == 0.0));
    if zero_col || !(cond < MAX_CONDITION) {
        return Err(Error::RankDeficient {
            condition: cond,
            columns: weak_columns(a, names),
        });
    }
    Ok(cond)
}

fn rmse(res: &DVector<f64>) -> f64 {
    if res.is_empty() {
        0.0
    } else {
        (res.norm_squared() / res.len() as f64).sqrt()
    }
}

/// Fits γ₁…γ₇; `cp` and `ts` take their standard values.
pub fn fit_params(records: &[IdRecord]) -> Result<FitReport> {
    let reg = build_regressors(records)?;
    let cond_dyn = check_rank(&reg.a_dyn, &DYN_COLUMNS)?;
    let cond_out = check_rank(&reg.a_out, &OUT_COLUMNS)?;
    let th_dyn = qr_lstsq(&reg.a_dyn, &reg.b_dyn)
        .ok_or_else(|| Error::Solver("triangular solve failed for dynamics block".into()))?;
    let th_out = qr_lstsq(&reg.a_out, &reg.b_out)
        .ok_or_else(|| Error::Solver("triangular solve failed for output block".into()))?;
    let params = ModelParams::from_gamma([
        th_dyn[0], th_dyn[1], th_dyn[2], th_dyn[3], th_out[0], th_out[1], th_out[2],
    ]);
    Ok(FitReport {
        params,
        rmse_devap: rmse(&(&reg.b_dyn - &reg.a_dyn * &th_dyn)),
        rmse_tdis: rmse(&(&reg.b_out - &reg.a_out * &th_out)),
        condition_number: cond_dyn.max(cond_out),
    })
}

/// Scores `params` on `records` without refitting.
pub fn validate(params: &ModelParams, records: &[IdRecord]) -> Result<FitReport> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let reg = regressors_unchecked(records)?;
    let th_dyn = DVector::from_vec(vec![params.gamma1, params.gamma2, params.gamma3, params.gamma4]);
    let th_out = DVector::from_vec(vec![params.gamma5, params.gamma6, params.gamma7]);
    Ok(FitReport {
        params: *params,
        rmse_devap: rmse(&(&reg.b_dyn - &reg.a_dyn * &th_dyn)),
        rmse_tdis: rmse(&(&reg.b_out - &reg.a_out * &th_out)),
        condition_number: condition_number(&reg.a_dyn).max(condition_number(&reg.a_out)),
    })
}

/// Contiguous 70/30 train/validation split.
pub fn split_train_validation(records: &[IdRecord]) -> (&[IdRecord], &[IdRecord]) {
    let cut = (records.len() * 7) / 10;
    records.split_at(cut)
}

/// Random-sinusoid excitation: each input is the mean of its range plus three
/// sinusoids with random frequency and phase, scaled so the sum spans the range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub t_evap_targ_range: (f64, f64),
    pub w_bl_range: (f64, f64),
    pub t_amb_range: (f64, f64),
    pub t_cab_range: (f64, f64),
    pub freq_range_hz: (f64, f64),
    pub t_evap0: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            n_samples: 600,
            seed: 42,
            t_evap_targ_range: (2.0, 10.0),
            w_bl_range: (0.05, 0.15),
            t_amb_range: (30.0, 40.0),
            t_cab_range: (25.0, 45.0),
            freq_range_hz: (0.002, 0.05),
            t_evap0: 8.0,
        }
    }
}

struct SineSum {
    mid: f64,
    amp: f64,
    tones: [(f64, f64); 3],
}

impl SineSum {
    fn new(range: (f64, f64), freq: (f64, f64), rng: &mut ChaCha8Rng) -> Self {
        let tones = std::array::from_fn(|_| {
            (
                rng.random_range(freq.0..freq.1),
                rng.random_range(0.0..2.0 * PI),
            )
        });
        SineSum {
            mid: 0.5 * (range.0 + range.1),
            amp: 0.5 * (range.1 - range.0) / 3.0,
            tones,
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.mid
            + self.amp
                * self
                    .tones
                    .iter()
                    .map(|(f, ph)| (2.0 * PI * f * t + ph).sin())
                    .sum::<f64>()
    }
}

/// Forward-simulates the model under random-sinusoid excitation and returns
/// `n_samples + 1` noiseless samples.
pub fn simulate_excitation(params: &ModelParams, cfg: &ExcitationConfig) -> Vec<IdSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let targ = SineSum::new(cfg.t_evap_targ_range, cfg.freq_range_hz, &mut rng);
    let flow = SineSum::new(cfg.w_bl_range, cfg.freq_range_hz, &mut rng);
    let amb = SineSum::new(cfg.t_amb_range, cfg.freq_range_hz, &mut rng);
    let cab = SineSum::new(cfg.t_cab_range, cfg.freq_range_hz, &mut rng);

    let ts = params.ts;
    let mut t_evap = cfg.t_evap0;
    let mut out = Vec::with_capacity(cfg.n_samples + 1);
    for k in 0..=cfg.n_samples {
        let t = k as f64 * ts;
        let w = flow.at(t);
        let dw = flow.at(t + ts) - w;
        let t_targ = targ.at(t);
        let t_amb = amb.at(t);
        let t_cab = cab.at(t);
        out.push(IdSample {
            time_s: t,
            t_evap_c: t_evap,
            t_evap_targ_c: t_targ,
            t_amb_c: t_amb,
            t_cab_c: t_cab,
            t_discharge_c: model::discharge_temp(params, t_evap, t_cab),
            w_bl_kgps: w,
            dw_bl_kgps: dw,
        });
        t_evap = model::step_evap(
            params,
            &AcState::new(t_evap, w),
            &ControlInput::new(dw, t_targ),
            t_amb,
        );
    }
    out
}

/// Adds zero-mean Gaussian noise to the regression responses
/// (`t_evap_next` and `t_discharge`).
pub fn add_response_noise(records: &mut [IdRecord], sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for r in records.iter_mut() {
        r.t_evap_next += normal.sample(&mut rng);
        r.t_discharge += normal.sample(&mut rng);
    }
}
