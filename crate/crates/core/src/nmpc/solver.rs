//! Trust-region Sℓ1QP: sequential quadratic programming on the ℓ1 exact
//! penalty `f + ρ Σ max(0, c)`.
//!
//! Decisions are rescaled to the unit box and the objective is divided by
//! [`Problem::cost_scale`]. Each iteration builds a positive-definite
//! Lagrangian Hessian (central differences of the analytic gradient, with
//! eigenvalues reflected and floored) and solves the elastic QP subproblem
//! over the input box intersected with an ℓ∞ trust region. The penalty
//! weight is raised ×10 (up to `RHO_MAX`) whenever the linearised state
//! constraints stay violated while the trust region is not binding.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::problem::Problem;
use super::qp::solve_qp;
use super::{MpcSolution, SolveStatus};

const RHO0: f64 = 10.0;
const RHO_MAX: f64 = 1e8;
const HESS_STEP: f64 = 1e-5;

struct Scaled<'a> {
    prob: &'a Problem,
    lo: Vec<f64>,
    range: Vec<f64>,
    scale: f64,
}

impl<'a> Scaled<'a> {
    fn new(prob: &'a Problem) -> Self {
        let lo = prob.lower();
        let range: Vec<f64> = prob.upper().iter().zip(&lo).map(|(h, l)| h - l).collect();
        Scaled {
            prob,
            lo,
            range,
            scale: prob.cost_scale(),
        }
    }

    fn n(&self) -> usize {
        self.lo.len()
    }

    /// Maps unit-box coordinates to physical decisions; exact at both ends.
    fn unscale(&self, y: &[f64]) -> Vec<f64> {
        let hi = self.prob.upper();
        y.iter()
            .enumerate()
            .map(|(j, v)| {
                if *v <= 0.0 {
                    self.lo[j]
                } else if *v >= 1.0 {
                    hi[j]
                } else {
                    (self.lo[j] + self.range[j] * v).clamp(self.lo[j], hi[j])
                }
            })
            .collect()
    }

    fn unscale_free(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| self.lo[j] + self.range[j] * v)
            .collect()
    }

    fn scale_point(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.range[j] > 0.0 {
                    ((v - self.lo[j]) / self.range[j]).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn f_grad(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let (f, g) = self.prob.objective_and_gradient(&self.unscale_free(y));
        let g = g
            .iter()
            .zip(&self.range)
            .map(|(gj, r)| gj * r / self.scale)
            .collect();
        (f / self.scale, g)
    }

    fn cons(&self, y: &[f64]) -> Vec<f64> {
        self.prob.constraints(&self.unscale_free(y))
    }

    fn cons_jac(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let mut jac = self.prob.constraint_jacobian(&self.unscale_free(y));
        for row in jac.iter_mut() {
            for (v, r) in row.iter_mut().zip(&self.range) {
                *v *= r;
            }
        }
        jac
    }

    /// ℓ1 exact-penalty merit `f + ρ Σ max(0, c)`.
    fn merit(&self, y: &[f64], rho: f64) -> f64 {
        let (f, _) = self.f_grad(y);
        f + rho * self.cons(y).iter().map(|c| c.max(0.0)).sum::<f64>()
    }

    /// Lagrangian Hessian by central differences of its analytic gradient,
    /// with eigenvalues reflected and floored so it is positive definite.
    fn hessian(&self, y: &[f64], lam: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let grad_l = |v: &[f64]| {
            let (_, mut g) = self.f_grad(v);
            let jac = self.cons_jac(v);
            for (row, l) in jac.iter().zip(lam) {
                if *l != 0.0 {
                    for (gk, jk) in g.iter_mut().zip(row) {
                        *gk += l * jk;
                    }
                }
            }
            g
        };
        let mut h = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        for k in 0..n {
            yp[k] = y[k] + HESS_STEP;
            let gp = grad_l(&yp);
            yp[k] = y[k] - HESS_STEP;
            let gm = grad_l(&yp);
            yp[k] = y[k];
            for i in 0..n {
                h[(i, k)] = (gp[i] - gm[i]) / (2.0 * HESS_STEP);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let top = eig.eigenvalues.amax().max(1.0);
        let vals = eig.eigenvalues.map(|v| v.abs().max(1e-6 * top));
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    }

    /// KKT residual for `min f s.t. c ≤ 0, y ∈ [0,1]^n` with multipliers `lam`.
    fn kkt(&self, y: &[f64], lam: &[f64]) -> (f64, f64) {
        let (_, mut g) = self.f_grad(y);
        let c = self.cons(y);
        let jac = self.cons_jac(y);
        for j in 0..c.len() {
            if lam[j] != 0.0 {
                for (gk, jk) in g.iter_mut().zip(&jac[j]) {
                    *gk += lam[j] * jk;
                }
            }
        }
        let stat = proj_grad_norm(y, &g);
        let feas = c.iter().cloned().fold(0.0, f64::max);
        let comp = c
            .iter()
            .zip(lam)
            .map(|(cj, lj)| (cj * lj).abs())
            .fold(0.0, f64::max);
        (stat.max(feas).max(comp), feas)
    }
}

fn proj_grad_norm(y: &[f64], g: &[f64]) -> f64 {
    y.iter()
        .zip(g)
        .map(|(yi, gi)| (yi - (yi - gi).clamp(0.0, 1.0)).abs())
        .fold(0.0, f64::max)
}

/// Solves the NLP from a cold start or from a warm-start solution whose
/// inputs are reused (projected into the input box) together with its
/// multipliers when the dimensions agree.
pub fn solve(prob: &Problem, warm: Option<&MpcSolution>) -> Result<MpcSolution> {
    let started = Instant::now();
    let sc = Scaled::new(prob);
    let m = prob.constraint_count();
    let tol = prob.cfg.tol;

    let z0 = match warm {
        Some(w) if w.u_seq.len() == prob.np() => prob.decision_from_inputs(&w.u_seq),
        _ => prob.cold_start(),
    };
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("warm start"));
    }
    let mut y = sc.scale_point(&z0);
    let y_start = y.clone();
    let mut lam = match warm {
        Some(w) if w.multipliers.len() == m => w.multipliers.clone(),
        _ => vec![0.0; m],
    };
    let mut rho = RHO0;
    let mut delta = 0.5;
    let mut noise_steps = 0;
    let mut iters = 0usize;
    let mut status = SolveStatus::MaxIter;

    while iters < prob.cfg.max_iter {
        let (f, g) = sc.f_grad(&y);
        let c = sc.cons(&y);
        let jac = sc.cons_jac(&y);
        if !f.is_finite() || g.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite objective or constraints".into()));
        }
        let h = sc.hessian(&y, &lam);
        iters += 1;

        let (d, _, lam_qp) = loop {
            let (d, t, l) = penalty_qp(&y, &g, &c, &jac, &h, rho, delta)?;
            let linear_viol = t.iter().cloned().fold(0.0, f64::max);
            let dmax = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            // the penalty is too weak when the linearised constraints stay
            // violated although the trust region is not what limits the step
            if linear_viol > 0.1 * tol && dmax < 0.99 * delta && rho < RHO_MAX {
                rho = (rho * 10.0).min(RHO_MAX);
                continue;
            }
            break (d, t, l);
        };
        lam = lam_qp;

        let (kkt, viol) = sc.kkt(&y, &lam);
        if kkt <= tol {
            status = SolveStatus::Converged;
            break;
        }
        let bd = &h * DVector::from_column_slice(&d);
        let quad: f64 = d.iter().zip(bd.iter()).map(|(a, b)| a * b).sum();
        let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let infeas = c.iter().map(|v| v.max(0.0)).sum::<f64>();
        let lin_infeas: f64 = c
            .iter()
            .zip(&jac)
            .map(|(cj, row)| (cj + row.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
            .sum();
        let phi = f + rho * infeas;
        let pred = rho * (infeas - lin_infeas) - lin - 0.5 * quad;
        let dmax = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let trial: Vec<f64> = y.iter().zip(&d).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
        let noise = 1e-12 * (1.0 + phi.abs());
        if pred <= noise {
            // the model cannot resolve further progress in merit terms;
            // a short step is still a valid Newton correction
            if dmax <= 1e-3 && noise_steps < 10 {
                noise_steps += 1;
                y = trial;
                continue;
            }
            status = stalled_status(viol, rho, tol);
            break;
        }
        let ratio = (phi - sc.merit(&trial, rho)) / pred;
        if ratio >= 1e-4 {
            y = trial;
            if ratio > 0.75 && dmax >= 0.9 * delta {
                delta = (2.0 * delta).min(1.0);
            }
        } else {
            delta = 0.25 * dmax;
            if delta < 1e-12 {
                status = stalled_status(viol, rho, tol);
                break;
            }
        }
    }
    if status == SolveStatus::MaxIter {
        let (_, viol) = sc.kkt(&y, &lam);
        if viol > tol && rho >= RHO_MAX {
            status = SolveStatus::InfeasibleRelaxed;
        }
    }

    let mut z = sc.unscale(&y);
    // a feasible warm start is never worsened
    if warm.is_some() {
        let z_start = sc.unscale(&y_start);
        let start_feasible = prob.constraints(&z_start).iter().all(|c| *c <= tol);
        if start_feasible && prob.objective(&z_start) < prob.objective(&z) {
            z = z_start;
            y = y_start;
        }
    }
    let (kkt, viol) = sc.kkt(&y, &lam);
    let u_seq = prob.inputs_from_decision(&z);
    let states = prob.rollout(&z);
    let cost = prob.objective(&z);
    if !cost.is_finite() {
        return Err(Error::Solver("non-finite cost".into()));
    }
    Ok(MpcSolution {
        u_seq,
        states,
        cost,
        kkt_residual: kkt,
        max_violation: viol,
        iterations: iters,
        solve_time: started.elapsed().as_secs_f64(),
        status,
        multipliers: lam,
        x0_clamped: prob.x0_clamped(),
        decision: z,
    })
}

fn stalled_status(viol: f64, rho: f64, tol: f64) -> SolveStatus {
    if viol > tol && rho >= RHO_MAX {
        SolveStatus::InfeasibleRelaxed
    } else {
        SolveStatus::MaxIter
    }
}

/// Elastic QP subproblem of the ℓ1 penalty over the unit box ∩ trust region:
/// `min gᵀd + ½dᵀHd + ρ Σ t  s.t.  c + J d ≤ t, t ≥ 0`.
/// Returns the step, the elastic slacks and the constraint multipliers.
#[allow(clippy::type_complexity)]
fn penalty_qp(
    y: &[f64],
    g: &[f64],
    c: &[f64],
    jac: &[Vec<f64>],
    h: &DMatrix<f64>,
    rho: f64,
    delta: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let lo: Vec<f64> = y.iter().map(|v| -v.min(delta)).collect();
    let hi: Vec<f64> = y.iter().map(|v| (1.0 - v).min(delta)).collect();
    // rows that cannot reach zero anywhere in the step box are left out
    let rows: Vec<usize> = (0..c.len())
        .filter(|&k| {
            let reach: f64 = jac[k]
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(j, (l, h))| (j * l).max(j * h))
                .sum();
            c[k] + reach >= -1e-12
        })
        .collect();
    let m = rows.len();
    let nv = n + m;
    let mut q_mat = DMatrix::zeros(nv, nv);
    q_mat.view_mut((0, 0), (n, n)).copy_from(h);
    let mut q = DVector::zeros(nv);
    q.rows_mut(0, n).copy_from_slice(g);
    q.rows_mut(n, m).fill(rho);
    let mut a = DMatrix::zeros(2 * n + 2 * m, nv);
    let mut b = DVector::zeros(2 * n + 2 * m);
    for j in 0..n {
        a[(j, j)] = 1.0;
        b[j] = hi[j];
        a[(n + j, j)] = -1.0;
        b[n + j] = -lo[j];
    }
    for (r, &k) in rows.iter().enumerate() {
        a[(2 * n + r, n + r)] = -1.0;
        let row = 2 * n + m + r;
        for j in 0..n {
            a[(row, j)] = jac[k][j];
        }
        a[(row, n + r)] = -1.0;
        b[row] = -c[k];
    }
    let sol = solve_qp(&q_mat, &q, &a, &b);
    if !sol.x.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("QP subproblem diverged".into()));
    }
    let d = sol.x.rows(0, n).iter().copied().collect();
    let mut t = vec![0.0; c.len()];
    let mut lam = vec![0.0; c.len()];
    for (r, &k) in rows.iter().enumerate() {
        t[k] = sol.x[n + r].max(0.0);
        lam[k] = sol.z[2 * n + m + r].clamp(0.0, rho);
    }
    Ok((d, t, lam))
}
