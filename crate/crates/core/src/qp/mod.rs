//! Dense QP engine.
//!
//! * [`QpSolver::project`]: Euclidean projection onto a polyhedron
//!   `{ξ : Aξ ≤ b, Eξ = e}` with multipliers;
//! * [`QpSolver::solve`]: general strictly convex QP (same machinery);
//! * [`QpSolver::solve_dual`] and [`QpSolver::feedback`]: the two
//!   multiplier-space programs attached to the safe gradient flow, whose
//!   Hessian is a (possibly singular) Gram matrix.

mod active_set;
mod proximal;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{norm_inf, vstack};
use crate::model::PointData;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `{ξ : Aξ ≤ b, Eξ = e}`
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub e: DMatrix<T>,
    pub e_rhs: DVector<T>,
}

impl<T: Scalar> Polyhedron<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>, e: DMatrix<T>, e_rhs: DVector<T>) -> Self {
        Polyhedron { a, b, e, e_rhs }
    }

    pub fn inequalities(a: DMatrix<T>, b: DVector<T>) -> Self {
        let n = a.ncols();
        Polyhedron { a, b, e: DMatrix::zeros(0, n), e_rhs: DVector::zeros(0) }
    }

    pub fn unconstrained(n: usize) -> Self {
        Polyhedron {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            e: DMatrix::zeros(0, n),
            e_rhs: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn check(&self) -> Result<(), QpError> {
        let n = self.a.ncols();
        if self.e.ncols() != n {
            return Err(QpError::Dimension(format!("A has {n} columns, E has {}", self.e.ncols())));
        }
        if self.b.len() != self.a.nrows() {
            return Err(QpError::Dimension(format!("A has {} rows, b has {}", self.a.nrows(), self.b.len())));
        }
        if self.e_rhs.len() != self.e.nrows() {
            return Err(QpError::Dimension(format!(
                "E has {} rows, e has {}",
                self.e.nrows(),
                self.e_rhs.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn rhs_scale(&self) -> T {
        norm_inf(&self.b).max(norm_inf(&self.e_rhs))
    }

    /// Largest violation `max(max(Aξ − b)₊, ‖Eξ − e‖∞)`.
    pub fn violation(&self, xi: &DVector<T>) -> T {
        let mut v = T::zero();
        if self.a.nrows() > 0 {
            let r = &self.a * xi - &self.b;
            v = r.iter().fold(v, |acc, x| acc.max(*x));
        }
        if self.e.nrows() > 0 {
            v = v.max(norm_inf(&(&self.e * xi - &self.e_rhs)));
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Degenerate,
    IterLimit,
    /// Only from the dual program: its objective is unbounded below, which
    /// means the primal polyhedron is empty.
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct QpSolution<T: Scalar> {
    pub xi: DVector<T>,
    pub mult_ineq: DVector<T>,
    pub mult_eq: DVector<T>,
    /// Inequalities in the final working set.
    pub working_set: Vec<usize>,
    pub status: QpStatus,
    pub kkt_residual: T,
    pub iterations: usize,
    /// For `Infeasible`: `(y, w)` with `y ≥ 0`, `Aᵀy + Eᵀw = 0`, `bᵀy + eᵀw < 0`.
    pub certificate: Option<DVector<T>>,
    /// Linearly dependent, consistent equality rows left out of the working set.
    pub dropped_equalities: Vec<usize>,
}

impl<T: Scalar> QpSolution<T> {
    fn failed(n: usize, m: usize, k: usize, status: QpStatus, iterations: usize) -> Self {
        QpSolution {
            xi: DVector::zeros(n),
            mult_ineq: DVector::zeros(m),
            mult_eq: DVector::zeros(k),
            working_set: Vec::new(),
            status,
            kkt_residual: T::infinity(),
            iterations,
            certificate: None,
            dropped_equalities: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Multipliers returned by the multiplier-space programs.
#[derive(Clone, Debug)]
pub struct MultiplierSolution<T: Scalar> {
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: T,
}

#[derive(Clone, Debug)]
pub struct QpOptions<T> {
    /// Absolute KKT tolerance, scaled by `1 + ‖c‖∞ + ‖(b, e)‖∞`.
    pub kkt_tol: T,
    /// Feasibility tolerance, scaled by `1 + ‖(b, e)‖∞`.
    pub feas_tol: T,
    /// Ties in the entering/leaving ratio tests closer than this are broken
    /// by smallest index.
    pub tie_tol: T,
    /// A new constraint normal is treated as linearly dependent on the
    /// working set when its reduced curvature falls below this fraction.
    pub dep_tol: T,
    /// Overrides the default `50·(m + k + 1)` iteration cap.
    pub max_iter: Option<usize>,
    /// Proximal weight (relative to `1 + max|G|`) for Gram-matrix programs.
    pub prox_weight: T,
    pub max_outer: usize,
}

impl<T: Scalar> Default for QpOptions<T> {
    fn default() -> Self {
        QpOptions {
            kkt_tol: T::tol(1e-9, 1e4),
            feas_tol: T::tol(1e-9, 1e4),
            tie_tol: T::tol(1e-10, 16.0),
            dep_tol: T::tol(1e-10, 64.0),
            max_iter: None,
            prox_weight: T::tol(1e-6, 1e5),
            max_outer: 400,
        }
    }
}

/// Maximum KKT violation of `(z, u, v)` for `min ½zᵀHz + cᵀz` over `poly`
/// (`H = I` when `None`): stationarity, primal and dual feasibility,
/// complementarity.
pub fn kkt_residual<T: Scalar>(
    hess: Option<&DMatrix<T>>,
    c: &DVector<T>,
    poly: &Polyhedron<T>,
    z: &DVector<T>,
    u: &DVector<T>,
    v: &DVector<T>,
) -> T {
    let mut grad = match hess {
        Some(h) => h * z + c,
        None => z + c,
    };
    if poly.a.nrows() > 0 {
        grad += poly.a.transpose() * u;
    }
    if poly.e.nrows() > 0 {
        grad += poly.e.transpose() * v;
    }
    let mut res = norm_inf(&grad).max(poly.violation(z));
    if poly.a.nrows() > 0 {
        let slack = &poly.a * z - &poly.b;
        for i in 0..u.len() {
            res = res.max(-u[i]).max((u[i] * slack[i]).abs());
        }
    }
    res
}

/// Dense QP solver. Holds options and an iteration counter; use one instance
/// per thread.
#[derive(Clone, Debug)]
pub struct QpSolver<T: Scalar> {
    pub opts: QpOptions<T>,
    iterations: usize,
    solves: usize,
}

impl<T: Scalar> Default for QpSolver<T> {
    fn default() -> Self {
        QpSolver::new(QpOptions::default())
    }
}

impl<T: Scalar> QpSolver<T> {
    pub fn new(opts: QpOptions<T>) -> Self {
        QpSolver { opts, iterations: 0, solves: 0 }
    }

    /// Total active-set iterations since construction.
    pub fn total_iterations(&self) -> usize {
        self.iterations
    }

    pub fn total_solves(&self) -> usize {
        self.solves
    }

    fn record(&mut self, iters: usize) {
        self.iterations += iters;
        self.solves += 1;
    }

    /// Projects `point` onto `poly`: `argmin ½‖ξ − point‖²`, with
    /// multipliers satisfying `ξ − point + Aᵀu + Eᵀv = 0`.
    pub fn project(&mut self, point: &DVector<T>, poly: &Polyhedron<T>) -> Result<QpSolution<T>, QpError> {
        poly.check()?;
        if point.len() != poly.dim() {
            return Err(QpError::Dimension(format!(
                "point has {} entries, polyhedron lives in dimension {}",
                point.len(),
                poly.dim()
            )));
        }
        let sol = active_set::solve(None, &-point, poly, &self.opts);
        self.record(sol.iterations);
        Ok(sol)
    }

    /// `argmin ½zᵀHz + cᵀz` over `poly` for symmetric positive definite `H`.
    pub fn solve(
        &mut self,
        hess: &DMatrix<T>,
        c: &DVector<T>,
        poly: &Polyhedron<T>,
    ) -> Result<QpSolution<T>, QpError> {
        poly.check()?;
        let n = c.len();
        if hess.shape() != (n, n) || poly.dim() != n {
            return Err(QpError::Dimension(format!(
                "Hessian {:?}, linear term {n}, polyhedron dimension {}",
                hess.shape(),
                poly.dim()
            )));
        }
        let sol = active_set::solve(Some(hess), c, poly, &self.opts);
        self.record(sol.iterations);
        Ok(sol)
    }

    /// Minimizes `½ wᵀ gram w + linᵀ w` over `w = (u, v)` with `u ≥ 0` for the
    /// first `m` entries and `v` free.
    pub fn solve_dual(
        &mut self,
        gram: &DMatrix<T>,
        lin: &DVector<T>,
        m: usize,
    ) -> Result<MultiplierSolution<T>, QpError> {
        let d = lin.len();
        if gram.shape() != (d, d) || m > d {
            return Err(QpError::Dimension(format!("gram {:?}, lin {d}, m {m}", gram.shape())));
        }
        let mut a = DMatrix::zeros(m, d);
        for i in 0..m {
            a[(i, i)] = -T::one();
        }
        let poly = Polyhedron::inequalities(a, DVector::zeros(m));
        let res = proximal::solve(gram, lin, &poly, &self.opts);
        self.record(res.iterations);
        Ok(MultiplierSolution {
            u: res.z.rows(0, m).into_owned(),
            v: res.z.rows(m, d - m).into_owned(),
            status: res.status,
            iterations: res.iterations,
            kkt_residual: res.kkt_residual,
        })
    }

    /// Minimum-norm control `min ‖Jgᵀu + Jhᵀv‖²` over the admissible set
    ///
    /// ```text
    /// −Jg Jgᵀ u − Jg Jhᵀ v ≤ Jg∇f − αg,   −Jh Jgᵀ u − Jh Jhᵀ v = Jh∇f − αh,   u ≥ 0.
    /// ```
    ///
    /// The optimizer need not be unique; the returned element is the terminal
    /// iterate of the proximal sequence started at zero.
    pub fn feedback(&mut self, pd: &PointData<T>, alpha: T) -> Result<MultiplierSolution<T>, QpError> {
        let (m, k) = (pd.g.len(), pd.h.len());
        let n = pd.grad_f.len();
        let d = m + k;
        let jac = vstack(&[&pd.jac_g, &pd.jac_h], n);
        let gram = &jac * jac.transpose();
        let drift = &jac * &pd.grad_f;
        let mut a = DMatrix::zeros(m + m, d);
        let mut b = DVector::zeros(m + m);
        for i in 0..m {
            for c in 0..d {
                a[(i, c)] = -gram[(i, c)];
            }
            b[i] = drift[i] - alpha * pd.g[i];
            a[(m + i, i)] = -T::one();
        }
        let mut e = DMatrix::zeros(k, d);
        let mut e_rhs = DVector::zeros(k);
        for j in 0..k {
            for c in 0..d {
                e[(j, c)] = -gram[(m + j, c)];
            }
            e_rhs[j] = drift[m + j] - alpha * pd.h[j];
        }
        let poly = Polyhedron::new(a, b, e, e_rhs);
        // ‖Jᵀw‖² = ½ wᵀ(2·gram)w
        let hess = &gram * T::lit(2.0);
        let res = proximal::solve(&hess, &DVector::zeros(d), &poly, &self.opts);
        self.record(res.iterations);
        Ok(MultiplierSolution {
            u: res.z.rows(0, m).into_owned(),
            v: res.z.rows(m, k).into_owned(),
            status: res.status,
            iterations: res.iterations,
            kkt_residual: res.kkt_residual,
        })
    }
}
