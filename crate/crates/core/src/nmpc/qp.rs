//! Dense convex QP `min ½xᵀQx + qᵀx  s.t.  Ax ≤ b` by a Mehrotra
//! predictor-corrector interior-point method. Sized for the few dozen
//! variables of one NMPC step.

use nalgebra::{DMatrix, DVector};

pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    /// Inequality multipliers, `z ≥ 0`.
    pub z: DVector<f64>,
}

const MAX_ITER: usize = 100;

pub(crate) fn solve_qp(q_mat: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> QpSolution {
    // normalise the objective so the unit starting multipliers are sensible
    let sigma = q.amax().max(q_mat.amax()).max(1.0);
    let mut sol = solve_normalised(&(q_mat / sigma), &(q / sigma), a, b);
    sol.z *= sigma;
    sol
}

fn solve_normalised(q_mat: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> QpSolution {
    let n = q.len();
    let m = b.len();
    let mut x = DVector::zeros(n);
    let mut s = (b - a * &x).map(|v| v.max(1.0));
    let mut z = DVector::from_element(m, 1.0);
    let scale = 1.0 + q.amax().max(b.amax()).max(q_mat.amax());
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;

    for _ in 0..MAX_ITER {
        let rd = q_mat * &x + q + a.transpose() * &z;
        let rp = a * &x + &s - b;
        let mu = s.dot(&z) / m as f64;
        let merit = rd.amax().max(rp.amax()).max(mu) / scale;
        if best.as_ref().is_none_or(|(bm, _, _)| merit < *bm) {
            best = Some((merit, x.clone(), z.clone()));
        }
        if merit <= 1e-12 {
            break;
        }
        // past this point the reduced system is too ill-conditioned to help
        if mu <= 1e-18 * scale {
            break;
        }
        let w = z.component_div(&s);
        let mut k = q_mat.clone();
        let aw = DMatrix::from_fn(m, n, |i, j| a[(i, j)] * w[i]);
        k += a.transpose() * aw;
        let diag = k.diagonal().amax().max(1.0);
        for i in 0..n {
            k[(i, i)] += 1e-14 * diag;
        }
        let Some(ch) = k.clone().cholesky() else { break };

        // eliminating ds and dz leaves the reduced system K dx = rhs
        let direction = |rc: &DVector<f64>| {
            let t = (rc + z.component_mul(&rp)).component_div(&s);
            let rhs = -&rd - a.transpose() * &t;
            let mut dx = ch.solve(&rhs);
            let refine = ch.solve(&(&rhs - &k * &dx));
            dx += refine;
            let ds = -&rp - a * &dx;
            let dz = (rc - z.component_mul(&ds)).component_div(&s);
            (dx, ds, dz)
        };

        let sz = s.component_mul(&z);
        let (_, ds_a, dz_a) = direction(&(-&sz));
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = -&sz - ds_a.component_mul(&dz_a) + DVector::from_element(m, sigma * mu);
        let (dx, ds, dz) = direction(&rc);
        let step = 0.995 * max_step(&s, &ds).min(max_step(&z, &dz));
        let step = step.min(1.0);
        x += &dx * step;
        s += &ds * step;
        z += &dz * step;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    if let Some((_, bx, bz)) = best {
        x = bx;
        z = bz;
    }
    if let Some((px, pz)) = polish(q_mat, q, a, b, &x, &z, scale) {
        x = px;
        z = pz;
    }
    QpSolution { x, z }
}

/// Guesses the active set from the interior-point iterate and solves the
/// equality-constrained KKT system on it exactly, repairing the guess a few
/// times by adding violated rows and dropping negative multipliers. Returns
/// `None` unless the result is primal feasible with nonnegative multipliers.
fn polish(
    q_mat: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    scale: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = q.len();
    let m = b.len();
    let tol = 1e-9 * scale;
    let slack = b - a * x;
    let mut active: Vec<bool> = (0..m).map(|i| z[i] > slack[i]).collect();
    for _ in 0..10 {
        let rows: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let na = rows.len();
        let mut kkt = DMatrix::zeros(n + na, n + na);
        kkt.view_mut((0, 0), (n, n)).copy_from(q_mat);
        let mut rhs = DVector::zeros(n + na);
        rhs.rows_mut(0, n).copy_from(&(-q));
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[(i, j)];
                kkt[(j, n + r)] = a[(i, j)];
            }
            rhs[n + r] = b[i];
        }
        let svd = kkt.clone().svd(true, true);
        let mut sol = svd.solve(&rhs, 1e-13).ok()?;
        for _ in 0..3 {
            let r = &rhs - &kkt * &sol;
            sol += svd.solve(&r, 1e-13).ok()?;
        }
        let px = sol.rows(0, n).into_owned();
        let mut pz = DVector::zeros(m);
        for (r, &i) in rows.iter().enumerate() {
            pz[i] = sol[n + r];
        }
        let viol = a * &px - b;
        let rd = q_mat * &px + q + a.transpose() * &pz;
        if !px.iter().all(|v| v.is_finite()) || rd.amax() > tol {
            return None;
        }
        let mut changed = false;
        for i in 0..m {
            if !active[i] && viol[i] > tol {
                active[i] = true;
                changed = true;
            } else if active[i] && pz[i] < -tol {
                active[i] = false;
                changed = true;
            }
        }
        if !changed {
            return Some((px, pz.map(|v| v.max(0.0))));
        }
    }
    None
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(vi, d)| -vi / d)
        .fold(f64::INFINITY, f64::min)
        .min(1.0 / 0.995)
}
