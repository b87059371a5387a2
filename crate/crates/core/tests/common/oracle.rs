//! Brute-force projection oracle: enumerate every subset of inequality rows
//! treated as equalities, project onto each affine set in closed form, and
//! keep the best primal-feasible candidate.

use nalgebra::{DMatrix, DVector};

pub struct OracleResult {
    pub xi: Option<DVector<f64>>,
    pub objective: f64,
}

fn affine_projection(point: &DVector<f64>, w: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if w.nrows() == 0 {
        return Some(point.clone());
    }
    let pinv = w.clone().pseudo_inverse(1e-12).ok()?;
    let mut xi = point - &pinv * (w * point - rhs);
    // the SVD-based pseudo-inverse is only accurate to ~1e-9; refine
    for _ in 0..2 {
        xi -= &pinv * (w * &xi - rhs);
    }
    // inconsistent systems give a least-squares point that misses the set
    if (w * &xi - rhs).amax() > 1e-9 {
        return None;
    }
    Some(xi)
}

pub fn project(point: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, e: &DMatrix<f64>, e_rhs: &DVector<f64>) -> OracleResult {
    let m = a.nrows();
    let n = point.len();
    let feas_tol = 1e-9 * (1.0 + b.amax().max(if e_rhs.len() > 0 { e_rhs.amax() } else { 0.0 }));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let mut w = DMatrix::zeros(rows.len() + e.nrows(), n);
        let mut rhs = DVector::zeros(rows.len() + e.nrows());
        for (r, &i) in rows.iter().enumerate() {
            w.row_mut(r).copy_from(&a.row(i));
            rhs[r] = b[i];
        }
        for j in 0..e.nrows() {
            w.row_mut(rows.len() + j).copy_from(&e.row(j));
            rhs[rows.len() + j] = e_rhs[j];
        }
        let Some(xi) = affine_projection(point, &w, &rhs) else { continue };
        let ok_ineq = m == 0 || (a * &xi - b).max() <= feas_tol;
        let ok_eq = e.nrows() == 0 || (e * &xi - e_rhs).amax() <= feas_tol;
        if !(ok_ineq && ok_eq) {
            continue;
        }
        let obj = 0.5 * (&xi - point).norm_squared();
        if best.as_ref().map_or(true, |(o, _)| obj < *o) {
            best = Some((obj, xi));
        }
    }
    match best {
        Some((objective, xi)) => OracleResult { xi: Some(xi), objective },
        None => OracleResult { xi: None, objective: f64::INFINITY },
    }
}
