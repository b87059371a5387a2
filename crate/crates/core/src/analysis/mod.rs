//! Optimality and regularity diagnostics.

pub mod lp;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::flows::{safe_gradient_at, Construction, FlowError};
use crate::linalg::{
    eigenvalues, mat_norm_inf, mat_norm_max, norm_inf, pinv, projector_range_basis, rank_info, select_rows,
    symmetric_eigenvalues, vstack,
};
use crate::model::{classify_values, fd_jacobian, fd_step, EvaluationError, PointData, Problem};
use crate::qp::QpSolver;
use crate::Scalar;

/// Default tolerance for [`kkt_report`].
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
/// Margin threshold of the MFCQ linear program.
pub const CQ_TOL: f64 = 1e-8;
/// Relative singular value threshold for LICQ and pseudoinverses.
pub const RANK_TOL: f64 = 1e-10;
/// Strict complementarity threshold.
pub const STRICT_COMPLEMENTARITY_TOL: f64 = 1e-8;
/// `σ_min/σ_max` below which LICQ is reported as marginal.
pub const MARGINAL_LICQ: f64 = 1e-6;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("active constraint gradients are rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("multipliers have sizes ({got_u}, {got_v}), expected ({m}, {k})")]
    MultiplierDimension { m: usize, k: usize, got_u: usize, got_v: usize },
}

fn check_multipliers<T: Scalar>(p: &Problem<T>, u: &DVector<T>, v: &DVector<T>) -> Result<(), AnalysisError> {
    if u.len() != p.m() || v.len() != p.k() {
        return Err(AnalysisError::MultiplierDimension { m: p.m(), k: p.k(), got_u: u.len(), got_v: v.len() });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct KktReport<T: Scalar> {
    /// `‖∇f + Jgᵀu + Jhᵀv‖∞`
    pub stationarity: T,
    /// `max([g]₊, |h|)`
    pub primal_infeasibility: T,
    /// `max(0, −min u)`
    pub dual_infeasibility: T,
    /// `max_i |u_i g_i|`
    pub complementarity: T,
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub tol: T,
    pub is_kkt: bool,
}

impl<T: Scalar> KktReport<T> {
    /// Largest of the four residuals.
    pub fn max_residual(&self) -> T {
        self.stationarity.max(self.primal_infeasibility).max(self.dual_infeasibility).max(self.complementarity)
    }
}

pub fn kkt_report_at<T: Scalar>(pd: &PointData<T>, u: &DVector<T>, v: &DVector<T>, tol: T) -> KktReport<T> {
    let mut grad = pd.grad_f.clone();
    if !u.is_empty() {
        grad += pd.jac_g.transpose() * u;
    }
    if !v.is_empty() {
        grad += pd.jac_h.transpose() * v;
    }
    let stationarity = norm_inf(&grad);
    let primal_infeasibility = pd.infeasibility();
    let dual_infeasibility = u.iter().fold(T::zero(), |a, ui| a.max(-*ui));
    let complementarity = u.iter().zip(pd.g.iter()).fold(T::zero(), |a, (ui, gi)| a.max((*ui * *gi).abs()));
    let is_kkt = stationarity <= tol && primal_infeasibility <= tol && dual_infeasibility <= tol && complementarity <= tol;
    KktReport {
        stationarity,
        primal_infeasibility,
        dual_infeasibility,
        complementarity,
        u: u.clone(),
        v: v.clone(),
        tol,
        is_kkt,
    }
}

/// KKT residuals of `(x, u, v)`.
pub fn kkt_report<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    v: &DVector<T>,
    tol: T,
) -> Result<KktReport<T>, AnalysisError> {
    check_multipliers(p, u, v)?;
    Ok(kkt_report_at(&p.evaluate(x)?, u, v, tol))
}

/// Multipliers of the original program by least squares on the active
/// gradients: `min ‖∇f + Jg_Iᵀu_I + Jhᵀv‖`, `u_i = 0` off `I`.
pub fn least_squares_multipliers<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    eps_act: T,
) -> Result<(DVector<T>, DVector<T>), AnalysisError> {
    let pd = p.evaluate(x)?;
    let active = classify_values(&pd.g, eps_act).active;
    let jg = select_rows(&pd.jac_g, &active);
    let m_mat = vstack(&[&jg, &pd.jac_h], p.n());
    let w = crate::linalg::lstsq(&m_mat.transpose(), &-&pd.grad_f, T::lit(RANK_TOL));
    let mut u = DVector::zeros(p.m());
    for (r, &i) in active.iter().enumerate() {
        u[i] = w[r];
    }
    let v = w.rows(active.len(), p.k()).into_owned();
    Ok((u, v))
}

#[derive(Clone, Debug)]
pub struct CqReport<T: Scalar> {
    pub active: Vec<usize>,
    pub violated: Vec<usize>,
    pub licq: bool,
    pub rank: usize,
    pub rows: usize,
    pub sigma_min: T,
    pub mfcq: bool,
    /// Optimal `δ` of the MFCQ program (capped at 1).
    pub mfcq_margin: T,
    /// Direction `ξ` with `‖ξ‖∞ ≤ 1`, `Jhξ = 0`, `Jg_Iξ ≤ −δ`.
    pub mfcq_direction: DVector<T>,
    pub emfcq: bool,
    pub emfcq_margin: T,
    pub emfcq_direction: DVector<T>,
    pub jh_full_rank: bool,
}

/// `max δ` subject to `Jhξ = 0`, `G ξ + δ1 ≤ 0`, `‖ξ‖∞ ≤ 1`, `0 ≤ δ ≤ 1`.
fn mfcq_lp<T: Scalar>(g_rows: &DMatrix<T>, jh: &DMatrix<T>, n: usize) -> (T, DVector<T>) {
    let (mi, k) = (g_rows.nrows(), jh.nrows());
    // Variables (ξ⁺, ξ⁻, δ), all in [0, 1].
    let nv = 2 * n + 1;
    let rows = mi + 2 * k + nv;
    let mut a = DMatrix::zeros(rows, nv);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for i in 0..mi {
        for j in 0..n {
            a[(r, j)] = g_rows[(i, j)];
            a[(r, n + j)] = -g_rows[(i, j)];
        }
        a[(r, 2 * n)] = T::one();
        r += 1;
    }
    for sign in [T::one(), -T::one()] {
        for i in 0..k {
            for j in 0..n {
                a[(r, j)] = sign * jh[(i, j)];
                a[(r, n + j)] = -sign * jh[(i, j)];
            }
            r += 1;
        }
    }
    for j in 0..nv {
        a[(r, j)] = T::one();
        b[r] = T::one();
        r += 1;
    }
    let mut c = DVector::zeros(nv);
    c[2 * n] = T::one();
    let sol = lp::maximize(&c, &a, &b);
    let xi = DVector::from_fn(n, |j, _| sol.y[j] - sol.y[n + j]);
    (sol.y[2 * n], xi)
}

/// LICQ, MFCQ and EMFCQ at `x` with activity threshold `eps_act`.
pub fn check_cq<T: Scalar>(p: &Problem<T>, x: &DVector<T>, eps_act: T) -> Result<CqReport<T>, AnalysisError> {
    let pd = p.evaluate(x)?;
    let n = p.n();
    let sets = classify_values(&pd.g, eps_act);
    let jg0 = select_rows(&pd.jac_g, &sets.active);
    let stacked = vstack(&[&jg0, &pd.jac_h], n);
    let info = rank_info(&stacked, T::lit(RANK_TOL));
    let rows = stacked.nrows();
    let licq = info.rank == rows;
    let jh_full_rank = rank_info(&pd.jac_h, T::lit(RANK_TOL)).rank == p.k();
    let tol = T::lit(CQ_TOL);
    let (mfcq_margin, mfcq_direction) = mfcq_lp(&jg0, &pd.jac_h, n);
    let mut ext = sets.active.clone();
    ext.extend(&sets.violated);
    ext.sort_unstable();
    let (emfcq_margin, emfcq_direction) = mfcq_lp(&select_rows(&pd.jac_g, &ext), &pd.jac_h, n);
    Ok(CqReport {
        licq,
        rank: info.rank,
        rows,
        sigma_min: if rows == 0 { T::zero() } else { info.sigma_min },
        mfcq: mfcq_margin > tol && jh_full_rank,
        mfcq_margin,
        mfcq_direction,
        emfcq: emfcq_margin > tol && jh_full_rank,
        emfcq_margin,
        emfcq_direction,
        jh_full_rank,
        active: sets.active,
        violated: sets.violated,
    })
}

#[derive(Clone, Debug)]
pub struct JacobianReport<T: Scalar> {
    pub active: Vec<usize>,
    /// Projector onto the kernel of `[Jh; Jg_I]`.
    pub p: DMatrix<T>,
    /// Hessian of the Lagrangian.
    pub q: DMatrix<T>,
    /// `−PQ − α(I − P)`.
    pub jacobian: DMatrix<T>,
    pub eigenvalues: Vec<Complex<T>>,
    /// `−α` repeated `r` times followed by `−eig(BᵀQB)` for an orthonormal
    /// basis `B` of `im P`; ascending.
    pub predicted: Vec<T>,
    pub r: usize,
    pub fd_jacobian: DMatrix<T>,
    /// `‖J − J_fd‖∞`.
    pub fd_discrepancy: T,
    /// Largest distance between matched computed and predicted eigenvalues.
    pub spectrum_error: T,
    pub warnings: Vec<String>,
}

/// Sorts complex numbers by real, then imaginary part.
pub fn sort_spectrum<T: Scalar>(ev: &mut [Complex<T>]) {
    ev.sort_by(|a, b| {
        a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal).then(
            a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal),
        )
    });
}

/// Distance between two spectra after sorting both by real part.
pub fn spectrum_distance<T: Scalar>(computed: &[Complex<T>], predicted: &[T]) -> T {
    if computed.len() != predicted.len() {
        return T::infinity();
    }
    let mut c = computed.to_vec();
    sort_spectrum(&mut c);
    let mut p = predicted.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    c.iter().zip(&p).fold(T::zero(), |acc, (ci, pi)| { let (dr, di) = (ci.re - *pi, ci.im); acc.max((dr * dr + di * di).sqrt()) })
}

/// Jacobian of the safe gradient flow at a KKT point.
///
/// Precondition failures (not KKT, marginal LICQ, no strict
/// complementarity) are reported in `warnings`; only a rank-deficient active
/// Jacobian is an error.
pub fn flow_jacobian<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    v: &DVector<T>,
    alpha: T,
    eps_act: T,
) -> Result<JacobianReport<T>, AnalysisError> {
    check_multipliers(p, u, v)?;
    let n = p.n();
    let pd = p.evaluate(x)?;
    let mut warnings = Vec::new();
    let kkt = kkt_report_at(&pd, u, v, T::lit(DEFAULT_KKT_TOL));
    if !kkt.is_kkt {
        warnings.push(format!("point is not KKT (max residual {:e})", kkt.max_residual().as_f64()));
    }
    let active = classify_values(&pd.g, eps_act).active;
    let jg0 = select_rows(&pd.jac_g, &active);
    let m_mat = vstack(&[&pd.jac_h, &jg0], n);
    let rows = m_mat.nrows();
    let info = rank_info(&m_mat, T::lit(RANK_TOL));
    if info.rank < rows {
        return Err(AnalysisError::RankDeficient { rank: info.rank, rows });
    }
    if rows > 0 && info.sigma_min < T::lit(MARGINAL_LICQ) * info.sigma_max {
        warnings.push(format!(
            "LICQ is marginal (σ_min/σ_max = {:e})",
            (info.sigma_min / info.sigma_max).as_f64()
        ));
    }
    for &i in &active {
        if u[i] < T::lit(STRICT_COMPLEMENTARITY_TOL) {
            warnings.push(format!("strict complementarity fails for constraint {i} (u = {:e})", u[i].as_f64()));
        }
    }
    let (mp, _) = pinv(&m_mat, T::lit(RANK_TOL));
    let eye = DMatrix::<T>::identity(n, n);
    let proj = &eye - &mp * &m_mat;
    let proj = (&proj + proj.transpose()) * T::lit(0.5);
    let q = p.lagrangian_hessian(x, u, v);
    let jacobian = -(&proj * &q) - (&eye - &proj) * alpha;
    let mut ev = eigenvalues(&jacobian);
    sort_spectrum(&mut ev);
    let r = rows;
    let basis = projector_range_basis(&proj);
    let reduced = basis.transpose() * &q * &basis;
    let mut predicted: Vec<T> = vec![-alpha; r];
    predicted.extend(symmetric_eigenvalues(&reduced).into_iter().map(|l| -l));
    predicted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let spectrum_error = spectrum_distance(&ev, &predicted);

    let field = |y: &DVector<T>| -> DVector<T> {
        let mut solver = QpSolver::default();
        match p.evaluate(y).map_err(FlowError::from).and_then(|pd| {
            safe_gradient_at(&pd, alpha, Construction::Projection, &mut solver)
        }) {
            Ok(e) => e.xi,
            Err(_) => DVector::from_element(n, T::nan()),
        }
    };
    let eta = T::lit(1e-3) * fd_step(x);
    let fd = fd_jacobian(field, x, n, eta.max(T::machine_eps().sqrt() * (T::one() + norm_inf(x))));
    let fd_discrepancy = mat_norm_inf(&(&jacobian - &fd));
    Ok(JacobianReport {
        active,
        p: proj,
        q,
        jacobian,
        eigenvalues: ev,
        predicted,
        r,
        fd_jacobian: fd,
        fd_discrepancy,
        spectrum_error,
        warnings,
    })
}

/// `V_ε(x) = f + (1/ε)(Σ[g_i]₊ + Σ|h_j|)`.
pub fn exact_penalty<T: Scalar>(p: &Problem<T>, x: &DVector<T>, eps: T) -> Result<T, AnalysisError> {
    let pd = p.evaluate(x)?;
    Ok(exact_penalty_at(&pd, eps))
}

pub fn exact_penalty_at<T: Scalar>(pd: &PointData<T>, eps: T) -> T {
    let viol = pd.g.iter().fold(T::zero(), |a, gi| a + gi.max(T::zero())) + pd.h.iter().fold(T::zero(), |a, hj| a + hj.abs());
    pd.f + viol / eps
}

/// Upper Dini derivative of `V_ε` at `x` in direction `ξ`:
/// `∇fᵀξ + (1/ε)(Σ_{g_i>0}∇g_iᵀξ + Σ_{g_i=0}[∇g_iᵀξ]₊ + Σ_{h_j≠0}sgn(h_j)∇h_jᵀξ + Σ_{h_j=0}|∇h_jᵀξ|)`.
///
/// Along the safe gradient flow the terms for `g_i = 0` and `h_j = 0`
/// vanish, leaving the sums over violated constraints only.
pub fn exact_penalty_dini<T: Scalar>(p: &Problem<T>, x: &DVector<T>, eps: T, xi: &DVector<T>) -> Result<T, AnalysisError> {
    let pd = p.evaluate(x)?;
    let dg = &pd.jac_g * xi;
    let dh = &pd.jac_h * xi;
    let mut pen = T::zero();
    for i in 0..pd.g.len() {
        if pd.g[i] > T::zero() {
            pen += dg[i];
        } else if pd.g[i] == T::zero() {
            pen += dg[i].max(T::zero());
        }
    }
    for j in 0..pd.h.len() {
        if pd.h[j] > T::zero() {
            pen += dh[j];
        } else if pd.h[j] < T::zero() {
            pen -= dh[j];
        } else {
            pen += dh[j].abs();
        }
    }
    Ok(pd.grad_f.dot(xi) + pen / eps)
}

#[derive(Clone, Debug)]
pub struct ValueFunction<T: Scalar> {
    /// `W_α = αf + ∇fᵀ𝒢 + ½‖𝒢‖²`
    pub w: T,
    /// `−(αI − Q)𝒢`
    pub grad_w: DVector<T>,
    pub xi: DVector<T>,
    pub u: DVector<T>,
    pub v: DVector<T>,
}

/// Value function and its gradient, with `Q` built from the dual-QP
/// multipliers.
pub fn value_function_diag<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    alpha: T,
    solver: &mut QpSolver<T>,
) -> Result<ValueFunction<T>, AnalysisError> {
    let pd = p.evaluate(x)?;
    let ev = safe_gradient_at(&pd, alpha, Construction::DualQp, solver)?;
    // The velocity from the projection is exact; multipliers come from the dual.
    let xi = safe_gradient_at(&pd, alpha, Construction::Projection, solver).map(|e| e.xi).unwrap_or(ev.xi);
    let w = alpha * pd.f + pd.grad_f.dot(&xi) + xi.norm_squared() * T::lit(0.5);
    let q = p.lagrangian_hessian(x, &ev.u, &ev.v);
    let n = p.n();
    let grad_w = -((DMatrix::<T>::identity(n, n) * alpha - q) * &xi);
    Ok(ValueFunction { w, grad_w, xi, u: ev.u, v: ev.v })
}

/// Spectral radius of the Lagrangian Hessian at a KKT triple.
pub fn alpha_lower_bound<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    v: &DVector<T>,
) -> Result<T, AnalysisError> {
    check_multipliers(p, u, v)?;
    p.evaluate(x)?;
    let q = p.lagrangian_hessian(x, u, v);
    if q.nrows() == 0 {
        return Ok(T::zero());
    }
    Ok(symmetric_eigenvalues(&q).iter().fold(T::zero(), |a, l| a.max(l.abs())))
}

/// `max(‖P² − P‖max, ‖P − Pᵀ‖max)`.
pub fn projector_defect<T: Scalar>(proj: &DMatrix<T>) -> T {
    mat_norm_max(&(proj * proj - proj)).max(mat_norm_max(&(proj - proj.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> Problem<f64> {
        Problem::builder("fig3", 2)
            .objective(
                |x: &DVector<f64>| 0.25 * x.norm_squared() - 0.5 * x[0] + 0.25 * x[1],
                |x: &DVector<f64>| DVector::from_vec(vec![0.5 * x[0] - 0.5, 0.5 * x[1] + 0.25]),
            )
            .inequalities(
                2,
                |x: &DVector<f64>| DVector::from_vec(vec![-x[0], x[0] - x[1]]),
                |_: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0]),
            )
            .objective_hessian(|_: &DVector<f64>| DMatrix::identity(2, 2) * 0.5)
            .affine_constraints()
            .build()
    }

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn kkt_report_examples() {
        let p = fig3();
        let r = kkt_report(&p, &v2(0.25, 0.25), &v2(0.0, 0.375), &DVector::zeros(0), 1e-6).unwrap();
        assert!(r.is_kkt && r.max_residual() <= 1e-12);
        let r = kkt_report(&p, &v2(0.0, 0.0), &v2(0.0, 0.0), &DVector::zeros(0), 1e-6).unwrap();
        assert!(!r.is_kkt);
        assert_eq!(r.stationarity, 0.5);
        let free = Problem::<f64>::builder("free", 1)
            .objective(|x: &DVector<f64>| x[0] * x[0], |x: &DVector<f64>| x * 2.0)
            .build();
        let r = kkt_report(&free, &DVector::zeros(1), &DVector::zeros(0), &DVector::zeros(0), 1e-6).unwrap();
        assert!(r.is_kkt);
        assert!(kkt_report(&p, &v2(0.0, 0.0), &DVector::zeros(1), &DVector::zeros(0), 1e-6).is_err());
    }

    #[test]
    fn cq_examples() {
        let p = fig3();
        let r = check_cq(&p, &v2(0.25, 0.25), 1e-8).unwrap();
        assert!(r.licq && r.mfcq && r.emfcq);
        assert_eq!((r.rank, r.rows), (1, 1));
        let d = &r.mfcq_direction;
        assert!(d[0] - d[1] <= -r.mfcq_margin + 1e-12 && d.amax() <= 1.0 + 1e-12);

        let opposing = Problem::<f64>::builder("opposing", 2)
            .objective(|_: &DVector<f64>| 0.0, |_: &DVector<f64>| DVector::zeros(2))
            .inequalities(
                2,
                |x: &DVector<f64>| DVector::from_vec(vec![x[0], -x[0]]),
                |_: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
            )
            .build();
        let r = check_cq(&opposing, &v2(0.0, 0.0), 1e-8).unwrap();
        assert!(!r.licq && !r.mfcq);

        let r = check_cq(&p, &v2(0.2, 0.6), 1e-8).unwrap();
        assert!(r.licq && r.mfcq && r.emfcq);
        assert_eq!(r.mfcq_margin, 1.0);
    }

    #[test]
    fn jacobian_fig3() {
        let p = fig3();
        let rep = flow_jacobian(&p, &v2(0.25, 0.25), &v2(0.0, 0.375), &DVector::zeros(0), 1.0, 1e-8).unwrap();
        assert_eq!(rep.r, 1);
        assert!(rep.spectrum_error < 1e-12);
        assert!((rep.predicted[0] + 1.0).abs() < 1e-12 && (rep.predicted[1] + 0.5).abs() < 1e-12);
        assert!(rep.fd_discrepancy < 1e-5, "{}", rep.fd_discrepancy);
        assert!(projector_defect(&rep.p) < 1e-10);
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
    }

    #[test]
    fn jacobian_one_dimensional() {
        let p = Problem::<f64>::builder("1d", 1)
            .objective(|x: &DVector<f64>| 0.5 * (x[0] - 1.0).powi(2), |x: &DVector<f64>| x.add_scalar(-1.0))
            .inequalities(1, |x: &DVector<f64>| x.clone(), |_: &DVector<f64>| DMatrix::identity(1, 1))
            .build();
        let rep = flow_jacobian(&p, &DVector::zeros(1), &DVector::from_element(1, 1.0), &DVector::zeros(0), 2.0, 1e-8)
            .unwrap();
        assert!(rep.p.amax() < 1e-15);
        assert!((rep.jacobian[(0, 0)] + 2.0).abs() < 1e-15);
        assert!((rep.eigenvalues[0].re + 2.0).abs() < 1e-8);
    }

    #[test]
    fn jacobian_unconstrained() {
        let qm = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let qc = qm.clone();
        let p = Problem::<f64>::builder("quad", 2)
            .objective(move |x: &DVector<f64>| 0.5 * x.dot(&(&qc * x)), move |x: &DVector<f64>| &qm * x)
            .build();
        let rep = flow_jacobian(&p, &DVector::zeros(2), &DVector::zeros(0), &DVector::zeros(0), 1.0, 1e-8).unwrap();
        let eig = symmetric_eigenvalues(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let neg: Vec<f64> = eig.iter().map(|l| -l).collect();
        assert!(spectrum_distance(&rep.eigenvalues, &neg) < 1e-12);
    }

    #[test]
    fn rank_deficient_is_error() {
        let p = Problem::<f64>::builder("opposing", 1)
            .objective(|_: &DVector<f64>| 0.0, |_: &DVector<f64>| DVector::zeros(1))
            .inequalities(
                2,
                |x: &DVector<f64>| DVector::from_vec(vec![x[0], -x[0]]),
                |_: &DVector<f64>| DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            )
            .build();
        let r = flow_jacobian(&p, &DVector::zeros(1), &DVector::zeros(2), &DVector::zeros(0), 1.0, 1e-8);
        assert!(matches!(r, Err(AnalysisError::RankDeficient { rank: 1, rows: 2 })));
    }

    #[test]
    fn exact_penalty_examples() {
        let p = fig3();
        assert!((exact_penalty(&p, &v2(-1.0, 0.0), 0.1).unwrap() - 10.75).abs() < 1e-12);
        assert_eq!(exact_penalty(&p, &v2(0.2, 0.6), 0.1).unwrap(), p.objective(&v2(0.2, 0.6)));
        let x = v2(-1.0, 0.0);
        assert!(exact_penalty(&p, &x, 0.05).unwrap() > exact_penalty(&p, &x, 0.1).unwrap());
    }

    #[test]
    fn dini_matches_forward_difference() {
        let p = fig3();
        let mut s = QpSolver::default();
        for x in [v2(-0.5, 0.3), v2(0.6, 0.2), v2(0.1, 0.7)] {
            let xi = crate::flows::safe_gradient_field(&p, &x, 1.0, Construction::Projection, &mut s).unwrap().xi;
            let eps = 0.1;
            let d = exact_penalty_dini(&p, &x, eps, &xi).unwrap();
            let t = 1e-7;
            let fd = (exact_penalty(&p, &(&x + &xi * t), eps).unwrap() - exact_penalty(&p, &x, eps).unwrap()) / t;
            assert!((d - fd).abs() < 1e-5, "{d} {fd}");
        }
        let x = v2(0.25, 0.25);
        assert_eq!(exact_penalty_dini(&p, &x, 0.1, &DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn value_function_examples() {
        let p = fig3();
        let mut s = QpSolver::default();
        let vf = value_function_diag(&p, &v2(0.25, 0.25), 1.0, &mut s).unwrap();
        assert!((vf.w - p.objective(&v2(0.25, 0.25))).abs() < 1e-12);
        assert!(vf.grad_w.amax() < 1e-12);
        let x = v2(0.3, 0.8);
        let vf = value_function_diag(&p, &x, 1.0, &mut s).unwrap();
        let w = |y: &DVector<f64>| value_function_diag(&p, y, 1.0, &mut QpSolver::default()).unwrap().w;
        let fd = crate::model::fd_gradient(w, &x);
        assert!((&vf.grad_w - &fd).amax() <= 1e-4 * (1.0 + vf.grad_w.amax()), "{} {}", vf.grad_w, fd);
    }

    #[test]
    fn alpha_lower_bound_examples() {
        let p = fig3();
        let a = alpha_lower_bound(&p, &v2(0.25, 0.25), &v2(0.0, 0.375), &DVector::zeros(0)).unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        let lin = Problem::<f64>::builder("lin", 2)
            .objective(|x: &DVector<f64>| x[0], |_: &DVector<f64>| DVector::from_vec(vec![1.0, 0.0]))
            .inequalities(1, |x: &DVector<f64>| DVector::from_element(1, -x[0]), |_: &DVector<f64>| {
                DMatrix::from_row_slice(1, 2, &[-1.0, 0.0])
            })
            .objective_hessian(|_: &DVector<f64>| DMatrix::zeros(2, 2))
            .affine_constraints()
            .build();
        assert_eq!(alpha_lower_bound(&lin, &v2(0.0, 0.0), &DVector::from_element(1, 1.0), &DVector::zeros(0)).unwrap(), 0.0);
        let diag = Problem::<f64>::builder("diag", 2)
            .objective(|x: &DVector<f64>| 0.5 * (x[0] * x[0] + 3.0 * x[1] * x[1]), |x: &DVector<f64>| {
                DVector::from_vec(vec![x[0], 3.0 * x[1]])
            })
            .inequalities(1, |x: &DVector<f64>| DVector::from_element(1, -x[0]), |_: &DVector<f64>| {
                DMatrix::from_row_slice(1, 2, &[-1.0, 0.0])
            })
            .affine_constraints()
            .build();
        let a = alpha_lower_bound(&diag, &v2(0.0, 0.0), &DVector::from_element(1, 7.0), &DVector::zeros(0)).unwrap();
        assert!((a - 3.0).abs() < 1e-6);
    }

    #[test]
    fn least_squares_multipliers_fig3() {
        let p = fig3();
        let (u, v) = least_squares_multipliers(&p, &v2(0.25, 0.25), 1e-8).unwrap();
        assert!((u - v2(0.0, 0.375)).amax() < 1e-12 && v.is_empty());
    }
}
