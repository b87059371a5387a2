//! Dual active-set method for strictly convex QPs
//!
//! ```text
//! minimize ½ zᵀHz + cᵀz   subject to  A z ≤ b,  E z = e
//! ```
//!
//! Starts from the unconstrained minimizer and adds violated constraints one
//! at a time, dropping constraints whose multipliers would turn negative
//! (Goldfarb–Idnani). Every iterate is dual feasible, so no phase-1 is needed
//! and an empty polyhedron shows up as a constraint that can neither be added
//! nor made room for; the dual ray at that moment is the certificate.
//!
//! Working-set systems are re-factored from scratch each iteration; the
//! problems this crate solves have a handful of constraints.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, Polyhedron, QpOptions, QpSolution, QpStatus};
use crate::linalg::norm_inf;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Row {
    Ineq(usize),
    Eq(usize),
}

impl Row {
    /// Ordering key for Bland-style tie breaking: equalities never compete,
    /// inequalities by index.
    fn index(self) -> usize {
        match self {
            Row::Ineq(i) | Row::Eq(i) => i,
        }
    }
}

struct Active<T: Scalar> {
    row: Row,
    /// Constraint written as `normalᵀ z ≥ rhs`.
    normal: DVector<T>,
    /// +1 or −1: orientation applied to an equality row.
    sign: T,
    lambda: T,
}

enum AddOutcome<T: Scalar> {
    Added,
    /// Linearly dependent and already satisfied; left out of the working set.
    Skipped,
    Infeasible(DVector<T>),
    IterLimit,
    Degenerate,
}

struct Solver<'a, T: Scalar> {
    chol: Option<nalgebra::Cholesky<T, nalgebra::Dyn>>,
    poly: &'a Polyhedron<T>,
    opts: &'a QpOptions<T>,
    z: DVector<T>,
    active: Vec<Active<T>>,
    iterations: usize,
    cap: usize,
    dropped: Vec<usize>,
}

impl<'a, T: Scalar> Solver<'a, T> {
    fn hinv(&self, v: &DVector<T>) -> DVector<T> {
        match &self.chol {
            Some(ch) => ch.solve(v),
            None => v.clone(),
        }
    }

    fn oriented(&self, row: Row) -> (DVector<T>, T) {
        match row {
            Row::Ineq(i) => (-self.poly.a.row(i).transpose(), -self.poly.b[i]),
            Row::Eq(j) => (-self.poly.e.row(j).transpose(), -self.poly.e_rhs[j]),
        }
    }

    /// `(r, zdir)` with `r = (NᵀH⁻¹N)⁻¹NᵀH⁻¹ n_p` and `zdir = H⁻¹(n_p − N r)`.
    fn directions(&self, normal: &DVector<T>) -> Option<(DVector<T>, DVector<T>, T)> {
        let hinv_np = self.hinv(normal);
        let base = normal.dot(&hinv_np);
        let q = self.active.len();
        if q == 0 {
            return Some((DVector::zeros(0), hinv_np, base));
        }
        let n = normal.len();
        let mut nmat = DMatrix::zeros(n, q);
        let mut hinv_n = DMatrix::zeros(n, q);
        for (c, a) in self.active.iter().enumerate() {
            nmat.column_mut(c).copy_from(&a.normal);
            hinv_n.column_mut(c).copy_from(&self.hinv(&a.normal));
        }
        let gram = nmat.transpose() * &hinv_n;
        let rhs = hinv_n.transpose() * normal;
        let r = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram.lu().solve(&rhs)?,
        };
        let zdir = hinv_np - hinv_n * &r;
        Some((r, zdir, base))
    }

    /// Smallest admissible dual step over active inequalities with `r_j > 0`.
    fn partial_step(&self, r: &DVector<T>) -> (T, Option<usize>) {
        let mut best = T::infinity();
        let mut arg: Option<usize> = None;
        for (idx, a) in self.active.iter().enumerate() {
            if let Row::Ineq(_) = a.row {
                if r[idx] > T::zero() {
                    let ratio = a.lambda / r[idx];
                    let better = match arg {
                        None => true,
                        Some(cur) => {
                            ratio < best - self.opts.tie_tol
                                || ((ratio - best).abs() <= self.opts.tie_tol
                                    && a.row.index() < self.active[cur].row.index())
                        }
                    };
                    if better {
                        best = ratio;
                        arg = Some(idx);
                    }
                }
            }
        }
        (best, arg)
    }

    fn certificate(&self, r: &DVector<T>, row: Row, sign: T) -> DVector<T> {
        let m = self.poly.a.nrows();
        let mut y = DVector::zeros(m + self.poly.e.nrows());
        let mut put = |row: Row, sign: T, val: T| match row {
            Row::Ineq(i) => y[i] += val,
            Row::Eq(j) => y[m + j] += sign * val,
        };
        put(row, sign, T::one());
        for (idx, a) in self.active.iter().enumerate() {
            put(a.row, a.sign, -r[idx]);
        }
        y
    }

    fn add(&mut self, row: Row) -> AddOutcome<T> {
        let (mut normal, mut rhs) = self.oriented(row);
        let mut sign = T::one();
        let mut s = normal.dot(&self.z) - rhs;
        if matches!(row, Row::Eq(_)) && s > T::zero() {
            normal = -normal;
            rhs = -rhs;
            sign = -T::one();
            s = -s;
        }
        let feas_tol = self.opts.feas_tol * (T::one() + self.poly.rhs_scale());
        let mut lambda_p = T::zero();
        loop {
            self.iterations += 1;
            if self.iterations > self.cap {
                return AddOutcome::IterLimit;
            }
            let Some((r, zdir, base)) = self.directions(&normal) else {
                return AddOutcome::Degenerate;
            };
            let curvature = zdir.dot(&normal);
            let dependent = curvature <= self.opts.dep_tol * base;
            let (t1, kdrop) = self.partial_step(&r);
            if dependent {
                let Some(kdrop) = kdrop else {
                    if s.abs() <= feas_tol {
                        return AddOutcome::Skipped;
                    }
                    return AddOutcome::Infeasible(self.certificate(&r, row, sign));
                };
                for (idx, a) in self.active.iter_mut().enumerate() {
                    a.lambda -= t1 * r[idx];
                }
                lambda_p += t1;
                self.active.remove(kdrop);
                continue;
            }
            let t2 = (-s / curvature).max(T::zero());
            let t = if t2 <= t1 { t2 } else { t1 };
            self.z += &zdir * t;
            for (idx, a) in self.active.iter_mut().enumerate() {
                a.lambda -= t * r[idx];
            }
            lambda_p += t;
            if t2 <= t1 {
                self.active.push(Active { row, normal, sign, lambda: lambda_p });
                return AddOutcome::Added;
            }
            self.active.remove(kdrop.expect("finite partial step has an index"));
            s = normal.dot(&self.z) - rhs;
        }
    }

    /// Iterative refinement of the final working-set KKT system
    /// `Hz + c − Nλ = 0, Nᵀz = rhs`; undoes drift accumulated over the
    /// incremental updates.
    fn refine(&mut self, hess: Option<&DMatrix<T>>, c: &DVector<T>) {
        let n = self.z.len();
        let q = self.active.len();
        if q == 0 {
            return;
        }
        let mut kkt = DMatrix::zeros(n + q, n + q);
        match hess {
            Some(h) => kkt.view_mut((0, 0), (n, n)).copy_from(h),
            None => kkt.view_mut((0, 0), (n, n)).fill_with_identity(),
        }
        let mut rhs_act = DVector::zeros(q);
        for (col, a) in self.active.iter().enumerate() {
            let (normal, rhs) = self.oriented(a.row);
            let normal = normal * a.sign;
            for i in 0..n {
                kkt[(i, n + col)] = -normal[i];
                kkt[(n + col, i)] = normal[i];
            }
            rhs_act[col] = rhs * a.sign;
        }
        let Some(lu) = Some(kkt.clone().lu()).filter(|lu| lu.is_invertible()) else {
            return;
        };
        let residual = |z: &DVector<T>, lam: &DVector<T>| {
            let mut r = DVector::zeros(n + q);
            let top = kkt.view((0, 0), (n, n + q)) * crate::linalg::vcat(&[z, lam]) + c;
            r.rows_mut(0, n).copy_from(&-top);
            for col in 0..q {
                r[n + col] = rhs_act[col] - kkt.view((n + col, 0), (1, n)).dot(&z.transpose());
            }
            r
        };
        let mut lam = DVector::from_iterator(q, self.active.iter().map(|a| a.lambda));
        let mut z = self.z.clone();
        // Stationarity carries rounding of order |λ|·|N|, which can swamp the
        // primal rows; judge progress on each block relative to its size.
        let nmax = kkt.view((n, 0), (q, n)).amax();
        let stat_scale = T::one() + norm_inf(c) + norm_inf(&lam) * nmax + norm_inf(&z);
        let prim_scale = T::one() + norm_inf(&rhs_act) + nmax * norm_inf(&z);
        let measure = |r: &DVector<T>| {
            let stat = norm_inf(&r.rows(0, n).clone_owned()) / stat_scale;
            let prim = norm_inf(&r.rows(n, q).clone_owned()) / prim_scale;
            stat.max(prim)
        };
        let mut r = residual(&z, &lam);
        for _ in 0..3 {
            let Some(delta) = lu.solve(&r) else { return };
            let z_new = &z + delta.rows(0, n);
            let lam_new = &lam + delta.rows(n, q);
            let r_new = residual(&z_new, &lam_new);
            if measure(&r_new) >= measure(&r) {
                break;
            }
            z = z_new;
            lam = lam_new;
            r = r_new;
        }
        self.z = z;
        for (a, l) in self.active.iter_mut().zip(lam.iter()) {
            a.lambda = *l;
        }
    }

    /// Most violated inequality outside the working set; ties within
    /// `tie_tol` go to the smallest index.
    fn most_violated(&self) -> Option<usize> {
        let eps = T::machine_eps() * T::lit(64.0);
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.poly.a.nrows() {
            if self.active.iter().any(|a| a.row == Row::Ineq(i)) {
                continue;
            }
            let row = self.poly.a.row(i);
            let ax = row.dot(&self.z.transpose());
            let slack = self.poly.b[i] - ax;
            let mut mag = T::one() + self.poly.b[i].abs();
            for j in 0..row.len() {
                mag += (row[j] * self.z[j]).abs();
            }
            if slack < -(eps * mag) {
                match best {
                    Some((_, s)) if slack >= s - self.opts.tie_tol => {}
                    _ => best = Some((i, slack)),
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Solves the strictly convex QP with Hessian `hess` (identity when `None`).
pub(crate) fn solve<T: Scalar>(
    hess: Option<&DMatrix<T>>,
    c: &DVector<T>,
    poly: &Polyhedron<T>,
    opts: &QpOptions<T>,
) -> QpSolution<T> {
    let n = c.len();
    let (m, k) = (poly.a.nrows(), poly.e.nrows());
    let chol = match hess {
        Some(h) => match h.clone().cholesky() {
            Some(ch) => Some(ch),
            None => return QpSolution::failed(n, m, k, QpStatus::Degenerate, 0),
        },
        None => None,
    };
    let cap = opts.max_iter.unwrap_or(50 * (m + k + 1));
    let mut s = Solver {
        chol,
        poly,
        opts,
        z: DVector::zeros(n),
        active: Vec::new(),
        iterations: 0,
        cap,
        dropped: Vec::new(),
    };
    s.z = -s.hinv(c);

    let finish_fail = |s: &Solver<T>, status: QpStatus, cert: Option<DVector<T>>| {
        let mut sol = QpSolution::failed(n, m, k, status, s.iterations);
        sol.xi = s.z.clone();
        sol.certificate = cert;
        sol
    };

    for j in 0..k {
        match s.add(Row::Eq(j)) {
            AddOutcome::Added => {}
            AddOutcome::Skipped => s.dropped.push(j),
            AddOutcome::Infeasible(cert) => return finish_fail(&s, QpStatus::Infeasible, Some(cert)),
            AddOutcome::IterLimit => return finish_fail(&s, QpStatus::IterLimit, None),
            AddOutcome::Degenerate => return degenerate_or_infeasible(finish_fail(&s, QpStatus::Degenerate, None), poly, opts),
        }
    }
    while let Some(i) = s.most_violated() {
        match s.add(Row::Ineq(i)) {
            AddOutcome::Added | AddOutcome::Skipped => {}
            AddOutcome::Infeasible(cert) => return finish_fail(&s, QpStatus::Infeasible, Some(cert)),
            AddOutcome::IterLimit => return finish_fail(&s, QpStatus::IterLimit, None),
            AddOutcome::Degenerate => return degenerate_or_infeasible(finish_fail(&s, QpStatus::Degenerate, None), poly, opts),
        }
    }

    s.refine(hess, c);

    let mut u = DVector::zeros(m);
    let mut v = DVector::zeros(k);
    let mut working_set = Vec::new();
    for a in &s.active {
        match a.row {
            Row::Ineq(i) => {
                u[i] = a.lambda.max(T::zero());
                working_set.push(i);
            }
            Row::Eq(j) => v[j] = a.sign * a.lambda,
        }
    }
    working_set.sort_unstable();
    let residual = kkt_residual(hess, c, poly, &s.z, &u, &v);
    // Absolute threshold: huge multipliers on a near-dependent working set
    // inflate complementarity, and such points are reported as Degenerate.
    let status = if residual <= opts.kkt_tol { QpStatus::Optimal } else { QpStatus::Degenerate };
    let sol = QpSolution {
        xi: s.z,
        mult_ineq: u,
        mult_eq: v,
        working_set,
        status,
        kkt_residual: residual,
        iterations: s.iterations,
        certificate: None,
        dropped_equalities: s.dropped,
    };
    if status == QpStatus::Degenerate {
        degenerate_or_infeasible(sol, poly, opts)
    } else {
        sol
    }
}

/// A nearly contradictory working set makes the multipliers blow up before
/// the dual ray is recognised. Settle feasibility with an LP instead.
fn degenerate_or_infeasible<T: Scalar>(mut sol: QpSolution<T>, poly: &Polyhedron<T>, opts: &QpOptions<T>) -> QpSolution<T> {
    let feas_tol = opts.feas_tol * (T::one() + poly.rhs_scale());
    if let Some(cert) = farkas_certificate(poly, feas_tol) {
        sol.status = QpStatus::Infeasible;
        sol.certificate = Some(cert);
    }
    sol
}

/// Solves `max −(bᵀy + eᵀw)` over `Aᵀy + Eᵀw = 0`, `y ≥ 0`, `‖(y, w)‖₁ ≤ 1`.
/// The optimum equals the least achievable ∞-norm constraint violation, so a
/// value above `feas_tol` proves infeasibility and `(y, w)` certifies it.
pub(crate) fn farkas_certificate<T: Scalar>(poly: &Polyhedron<T>, feas_tol: T) -> Option<DVector<T>> {
    let (m, k, n) = (poly.a.nrows(), poly.e.nrows(), poly.a.ncols());
    if m + k == 0 {
        return None;
    }
    // columns: y (m), w⁺ (k), w⁻ (k)
    let nv = m + 2 * k;
    let col = |r: usize, j: usize| -> T {
        if j < m {
            poly.a[(j, r)]
        } else if j < m + k {
            poly.e[(j - m, r)]
        } else {
            -poly.e[(j - m - k, r)]
        }
    };
    let mut a = DMatrix::zeros(2 * n + 1, nv);
    for r in 0..n {
        for j in 0..nv {
            a[(r, j)] = col(r, j);
            a[(n + r, j)] = -col(r, j);
        }
    }
    for j in 0..nv {
        a[(2 * n, j)] = T::one();
    }
    let mut rhs = DVector::zeros(2 * n + 1);
    rhs[2 * n] = T::one();
    let mut obj = DVector::zeros(nv);
    for j in 0..m {
        obj[j] = -poly.b[j];
    }
    for j in 0..k {
        obj[m + j] = -poly.e_rhs[j];
        obj[m + k + j] = poly.e_rhs[j];
    }
    let lp = crate::analysis::lp::maximize(&obj, &a, &rhs);
    if lp.status != crate::analysis::lp::LpStatus::Optimal || lp.objective <= feas_tol {
        return None;
    }
    let mut y = DVector::zeros(m + k);
    for j in 0..m {
        y[j] = lp.y[j];
    }
    for j in 0..k {
        y[m + j] = lp.y[m + j] - lp.y[m + k + j];
    }
    Some(y)
}
