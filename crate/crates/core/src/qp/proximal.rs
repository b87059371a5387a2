//! Convex QPs with a positive *semi*definite Hessian.
//!
//! Proximal-point outer loop: each step solves the strictly convex program
//! `min ½zᵀGz + linᵀz + ρ/2‖z − z_k‖²` with the dual active-set method. After
//! every step the final working set is re-solved without the proximal term by
//! a minimum-norm least-squares KKT solve; the first polished point whose KKT
//! residual passes is returned.

use nalgebra::{DMatrix, DVector};

use super::{active_set, kkt_residual, Polyhedron, QpOptions, QpStatus};
use crate::linalg::{mat_norm_max, norm_inf, pinv};
use crate::scalar::Scalar;

pub(super) struct ProxResult<T: Scalar> {
    pub z: DVector<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: T,
}

fn polish<T: Scalar>(
    gram: &DMatrix<T>,
    lin: &DVector<T>,
    poly: &Polyhedron<T>,
    working: &[usize],
    dropped: &[usize],
) -> Option<(DVector<T>, DVector<T>, DVector<T>)> {
    let d = lin.len();
    let eq_rows: Vec<usize> = (0..poly.e.nrows()).filter(|j| !dropped.contains(j)).collect();
    let w = working.len() + eq_rows.len();
    let mut kkt = DMatrix::zeros(d + w, d + w);
    let mut rhs = DVector::zeros(d + w);
    kkt.view_mut((0, 0), (d, d)).copy_from(gram);
    rhs.rows_mut(0, d).copy_from(&-lin);
    for (r, &i) in working.iter().enumerate() {
        for c in 0..d {
            kkt[(d + r, c)] = poly.a[(i, c)];
            kkt[(c, d + r)] = poly.a[(i, c)];
        }
        rhs[d + r] = poly.b[i];
    }
    for (r, &j) in eq_rows.iter().enumerate() {
        let row = d + working.len() + r;
        for c in 0..d {
            kkt[(row, c)] = poly.e[(j, c)];
            kkt[(c, row)] = poly.e[(j, c)];
        }
        rhs[row] = poly.e_rhs[j];
    }
    let (kinv, _) = pinv(&kkt, T::tol(1e-13, 64.0));
    let sol = kinv * rhs;
    if !crate::linalg::all_finite(sol.as_slice()) {
        return None;
    }
    let z = sol.rows(0, d).into_owned();
    let mut u = DVector::zeros(poly.a.nrows());
    for (r, &i) in working.iter().enumerate() {
        u[i] = sol[d + r];
    }
    let mut v = DVector::zeros(poly.e.nrows());
    for (r, &j) in eq_rows.iter().enumerate() {
        v[j] = sol[d + working.len() + r];
    }
    Some((z, u, v))
}

/// `d` is a direction of unbounded descent: `Gd ≈ 0`, `Ad ≤ 0`, `Ed = 0`,
/// `linᵀd < 0`.
fn is_descent_ray<T: Scalar>(gram: &DMatrix<T>, lin: &DVector<T>, poly: &Polyhedron<T>, d: &DVector<T>) -> bool {
    let dn = norm_inf(d);
    if dn == T::zero() {
        return false;
    }
    let dir = d / dn;
    let tol = T::tol(1e-8, 1e4) * (T::one() + mat_norm_max(gram));
    let flat = norm_inf(&(gram * &dir)) <= tol;
    let recedes = (poly.a.nrows() == 0 || (&poly.a * &dir).iter().all(|x| *x <= tol))
        && (poly.e.nrows() == 0 || norm_inf(&(&poly.e * &dir)) <= tol);
    let descends = lin.dot(&dir) < -tol * (T::one() + norm_inf(lin));
    flat && recedes && descends
}

pub(super) fn solve<T: Scalar>(
    gram: &DMatrix<T>,
    lin: &DVector<T>,
    poly: &Polyhedron<T>,
    opts: &QpOptions<T>,
) -> ProxResult<T> {
    let d = lin.len();
    let rho = opts.prox_weight * (T::one() + mat_norm_max(gram));
    let sym = (gram + gram.transpose()) * T::lit(0.5);
    let mut hess = sym.clone();
    for i in 0..d {
        hess[(i, i)] += rho;
    }
    let tol = opts.kkt_tol * (T::one() + norm_inf(lin) + poly.rhs_scale());
    let blowup = T::lit(1e12) * (T::one() + norm_inf(lin) + poly.rhs_scale());

    let mut z = DVector::zeros(d);
    let mut iterations = 0;
    let mut last_res = T::infinity();
    for _ in 0..opts.max_outer.max(1) {
        let c = lin - &z * rho;
        let sol = active_set::solve(Some(&hess), &c, poly, opts);
        iterations += sol.iterations;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Degenerate => {
                // Accept a step whose residual for the proximal program is
                // merely loose; anything else is a real failure.
                if !crate::linalg::all_finite(sol.xi.as_slice()) {
                    return ProxResult { z, status: QpStatus::Degenerate, iterations, kkt_residual: last_res };
                }
            }
            status => return ProxResult { z, status, iterations, kkt_residual: last_res },
        }
        let step = &sol.xi - &z;
        z = sol.xi;
        let res = kkt_residual(Some(&sym), lin, poly, &z, &sol.mult_ineq, &sol.mult_eq);
        last_res = res;
        if res <= tol {
            return ProxResult { z, status: QpStatus::Optimal, iterations, kkt_residual: res };
        }
        if let Some((pz, pu, pv)) = polish(&sym, lin, poly, &sol.working_set, &sol.dropped_equalities) {
            let pres = kkt_residual(Some(&sym), lin, poly, &pz, &pu, &pv);
            if pres <= tol {
                return ProxResult { z: pz, status: QpStatus::Optimal, iterations, kkt_residual: pres };
            }
        }
        if is_descent_ray(&sym, lin, poly, &step) || norm_inf(&z) > blowup {
            return ProxResult { z, status: QpStatus::Unbounded, iterations, kkt_residual: res };
        }
    }
    ProxResult { z, status: QpStatus::IterLimit, iterations, kkt_residual: last_res }
}
