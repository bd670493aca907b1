//! Test-side reference implementations, written from the model equations
//! without going through the library, plus a brute-force grid optimiser.
#![allow(dead_code)]

use chillmpc_core::model::{AcState, ModelParams};
use chillmpc_core::nmpc::{build_problem, MpcConfig, PreviewWindow, Problem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GAMMA: [f64; 7] = [-0.084, -0.487, -1.121, -1.730, 0.729, 0.690, -11.457];
pub const CP: f64 = 1008.0;

/// Controller problem restated with plain numbers (recirculation air).
#[derive(Debug, Clone)]
pub struct RefProblem {
    pub np: usize,
    pub alpha: f64,
    pub t_evap0: f64,
    pub w_bl0: f64,
    pub t_cab: f64,
    pub t_amb: f64,
    pub cop: f64,
    pub targ: Vec<f64>,
    pub beta: Vec<f64>,
    pub t_max: Vec<f64>,
    pub t_min: f64,
    pub w_lo: f64,
    pub w_hi: f64,
    pub dw: (f64, f64),
    pub tt: (f64, f64),
}

impl RefProblem {
    pub fn random(rng: &mut ChaCha8Rng, np: usize) -> Self {
        let alpha = 10f64.powf(rng.random_range(-3.0..5.0));
        RefProblem {
            np,
            alpha,
            t_evap0: rng.random_range(1.0..9.0),
            w_bl0: rng.random_range(0.06..0.14),
            t_cab: rng.random_range(28.0..45.0),
            t_amb: 35.0,
            cop: rng.random_range(1.8..3.0),
            targ: (0..=np).map(|_| rng.random_range(800.0..3500.0)).collect(),
            beta: (0..=np).map(|_| rng.random_range(0.85..1.15)).collect(),
            t_max: vec![10.0; np + 1],
            t_min: 0.0,
            w_lo: 0.05,
            w_hi: 0.15,
            dw: (-0.05, 0.05),
            tt: (2.0, 10.0),
        }
    }

    pub fn to_library(&self) -> Problem {
        let mut cfg = MpcConfig {
            np: self.np,
            alpha: self.alpha,
            ..Default::default()
        };
        cfg.bounds.t_evap_min = self.t_min;
        cfg.bounds.w_bl_min = self.w_lo;
        cfg.bounds.w_bl_max = self.w_hi;
        cfg.bounds.dw_bl_min = self.dw.0;
        cfg.bounds.dw_bl_max = self.dw.1;
        cfg.bounds.t_evap_targ_min = self.tt.0;
        cfg.bounds.t_evap_targ_max = self.tt.1;
        let pv = PreviewWindow {
            p_dacp_targ: self.targ.clone(),
            t_evap_max: self.t_max.clone(),
            beta: self.beta.clone(),
            t_cab: self.t_cab,
            t_amb: self.t_amb,
            cop: self.cop,
        };
        build_problem(&ModelParams::default(), &AcState::new(self.t_evap0, self.w_bl0), &pv, &cfg).unwrap()
    }

    /// `(T_evap, W_bl)` for stages `0..=np`; decision is `[dw.., tt..]`.
    pub fn rollout(&self, z: &[f64]) -> Vec<(f64, f64)> {
        let g = GAMMA;
        let n = self.np;
        let mut out = vec![(self.t_evap0, self.w_bl0)];
        let (mut t, mut w) = (self.t_evap0, self.w_bl0);
        for i in 0..n {
            let (dw, tt) = (z[i], z[n + i]);
            let t_next = t + g[0] * (t - tt) + g[1] * (t - self.t_amb) * w + g[2] * (t - self.t_amb) * dw + g[3];
            w += dw;
            t = t_next;
            out.push((t, w));
        }
        out
    }

    pub fn powers(&self, z: &[f64]) -> Vec<f64> {
        self.rollout(z)
            .iter()
            .map(|(t, w)| {
                let td = GAMMA[4] * t + GAMMA[5] * self.t_cab + GAMMA[6];
                CP * (self.t_cab - td) * w
            })
            .collect()
    }

    pub fn cost(&self, z: &[f64]) -> f64 {
        self.powers(z)
            .iter()
            .enumerate()
            .map(|(i, p)| p / self.cop + self.alpha * (p - self.beta[i] * self.targ[i]).powi(2))
            .sum()
    }

    pub fn tracking_sse(&self, z: &[f64]) -> f64 {
        self.powers(z)
            .iter()
            .enumerate()
            .map(|(i, p)| (p - self.beta[i] * self.targ[i]).powi(2))
            .sum()
    }

    /// Largest state-bound violation over stages `1..=np` (stage 0 is fixed).
    pub fn violation(&self, z: &[f64]) -> f64 {
        self.rollout(z)
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, (t, w))| {
                (self.t_min - t)
                    .max(t - self.t_max[i])
                    .max(self.w_lo - w)
                    .max(w - self.w_hi)
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn lower(&self) -> Vec<f64> {
        let mut v = vec![self.dw.0; self.np];
        v.extend(vec![self.tt.0; self.np]);
        v
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut v = vec![self.dw.1; self.np];
        v.extend(vec![self.tt.1; self.np]);
        v
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cost: f64,
    pub argmin: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Spacing times a local Lipschitz estimate, summed over axes: the most
    /// the grid optimum can exceed the continuous optimum near the argmin.
    pub gap: f64,
}

/// Exhaustive search over the decision box with `points` per axis, keeping
/// only points that satisfy the state bounds.
pub fn grid_search(p: &RefProblem, points: usize) -> Option<GridResult> {
    let lo = p.lower();
    let hi = p.upper();
    let dim = lo.len();
    let spacing: Vec<f64> = (0..dim).map(|j| (hi[j] - lo[j]) / (points - 1) as f64).collect();
    let at = |idx: &[usize]| -> Vec<f64> { (0..dim).map(|j| lo[j] + idx[j] as f64 * spacing[j]).collect() };
    let mut idx = vec![0usize; dim];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let z = at(&idx);
        if p.violation(&z) <= 1e-12 {
            let c = p.cost(&z);
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, idx.clone()));
            }
        }
        let mut j = 0;
        loop {
            if j == dim {
                let (cost, bi) = best?;
                let z = at(&bi);
                let mut gap = 0.0;
                for a in 0..dim {
                    let mut slope: f64 = 0.0;
                    for step in [-1i64, 1] {
                        let k = bi[a] as i64 + step;
                        if k < 0 || k >= points as i64 {
                            continue;
                        }
                        let mut nb = bi.clone();
                        nb[a] = k as usize;
                        slope = slope.max((p.cost(&at(&nb)) - cost).abs() / spacing[a]);
                    }
                    gap += 0.5 * spacing[a] * slope;
                }
                return Some(GridResult {
                    cost,
                    argmin: z,
                    spacing,
                    gap,
                });
            }
            idx[j] += 1;
            if idx[j] < points {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Central differences of `f` at `z` with step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|j| {
            zp[j] = z[j] + h;
            let fp = f(&zp);
            zp[j] = z[j] - h;
            let fm = f(&zp);
            zp[j] = z[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn data_file(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}
