//! Constrained nonlinear programs
//!
//! ```text
//! minimize f(x)  subject to  g(x) ≤ 0,  h(x) = 0,   x ∈ ℝⁿ, g: ℝⁿ → ℝᵐ, h: ℝⁿ → ℝᵏ
//! ```
//!
//! and the derivative information the flows and diagnostics consume. Second
//! derivatives are optional; when absent a central finite difference of the
//! first derivatives is used.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{all_finite, norm_inf};
use crate::scalar::Scalar;

pub type ScalarFn<T> = Arc<dyn Fn(&DVector<T>) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
pub type MatrixFn<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;
/// `(x, i) ↦ ∇²c_i(x)` for the i-th component of a constraint map.
pub type IndexedMatrixFn<T> = Arc<dyn Fn(&DVector<T>, usize) -> DMatrix<T> + Send + Sync>;

/// Which evaluator produced a bad value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Objective,
    Gradient,
    Inequality,
    InequalityJacobian,
    Equality,
    EqualityJacobian,
    Hessian,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Component::Objective => "objective",
            Component::Gradient => "gradient",
            Component::Inequality => "inequality constraints",
            Component::InequalityJacobian => "inequality Jacobian",
            Component::Equality => "equality constraints",
            Component::EqualityJacobian => "equality Jacobian",
            Component::Hessian => "Hessian",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("non-finite value in {0}")]
    NonFinite(Component),
    #[error("{component} has shape {got:?}, expected {expected:?}")]
    Dimension { component: Component, expected: (usize, usize), got: (usize, usize) },
    #[error("point has {got} entries, problem dimension is {expected}")]
    PointDimension { expected: usize, got: usize },
}

/// A nonlinear program `min f(x) s.t. g(x) ≤ 0, h(x) = 0`.
///
/// Evaluators are shared behind `Arc` and must be safe to call from several
/// threads at once.
#[derive(Clone)]
pub struct Problem<T: Scalar> {
    name: String,
    n: usize,
    m: usize,
    k: usize,
    f: ScalarFn<T>,
    grad_f: VectorFn<T>,
    g: Option<VectorFn<T>>,
    jac_g: Option<MatrixFn<T>>,
    h: Option<VectorFn<T>>,
    jac_h: Option<MatrixFn<T>>,
    hess_f: Option<MatrixFn<T>>,
    hess_g: Option<IndexedMatrixFn<T>>,
    hess_h: Option<IndexedMatrixFn<T>>,
    affine_constraints: bool,
}

impl<T: Scalar> fmt::Debug for Problem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("k", &self.k)
            .field("affine_constraints", &self.affine_constraints)
            .finish_non_exhaustive()
    }
}

/// Builder for [`Problem`]. Objective and gradient are mandatory.
pub struct ProblemBuilder<T: Scalar> {
    name: String,
    n: usize,
    f: Option<ScalarFn<T>>,
    grad_f: Option<VectorFn<T>>,
    m: usize,
    g: Option<VectorFn<T>>,
    jac_g: Option<MatrixFn<T>>,
    k: usize,
    h: Option<VectorFn<T>>,
    jac_h: Option<MatrixFn<T>>,
    hess_f: Option<MatrixFn<T>>,
    hess_g: Option<IndexedMatrixFn<T>>,
    hess_h: Option<IndexedMatrixFn<T>>,
    affine: bool,
}

impl<T: Scalar> ProblemBuilder<T> {
    pub fn objective(
        mut self,
        f: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        self.f = Some(Arc::new(f));
        self.grad_f = Some(Arc::new(grad));
        self
    }

    pub fn inequalities(
        mut self,
        m: usize,
        g: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.m = m;
        self.g = Some(Arc::new(g));
        self.jac_g = Some(Arc::new(jac));
        self
    }

    pub fn equalities(
        mut self,
        k: usize,
        h: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.k = k;
        self.h = Some(Arc::new(h));
        self.jac_h = Some(Arc::new(jac));
        self
    }

    pub fn objective_hessian(
        mut self,
        hess: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.hess_f = Some(Arc::new(hess));
        self
    }

    pub fn inequality_hessians(
        mut self,
        hess: impl Fn(&DVector<T>, usize) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.hess_g = Some(Arc::new(hess));
        self
    }

    pub fn equality_hessians(
        mut self,
        hess: impl Fn(&DVector<T>, usize) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.hess_h = Some(Arc::new(hess));
        self
    }

    /// Marks all constraints as affine: Jacobians are constant and the
    /// feasible set is a polyhedron.
    pub fn affine_constraints(mut self) -> Self {
        self.affine = true;
        self
    }

    /// # Panics
    /// If no objective was supplied.
    pub fn build(self) -> Problem<T> {
        Problem {
            name: self.name,
            n: self.n,
            m: self.m,
            k: self.k,
            f: self.f.expect("objective is required"),
            grad_f: self.grad_f.expect("gradient is required"),
            g: self.g,
            jac_g: self.jac_g,
            h: self.h,
            jac_h: self.jac_h,
            hess_f: self.hess_f,
            hess_g: self.hess_g,
            hess_h: self.hess_h,
            affine_constraints: self.affine,
        }
    }
}

/// All first-order data at one point, evaluated once.
#[derive(Clone, Debug)]
pub struct PointData<T: Scalar> {
    pub x: DVector<T>,
    pub f: T,
    pub grad_f: DVector<T>,
    pub g: DVector<T>,
    pub jac_g: DMatrix<T>,
    pub h: DVector<T>,
    pub jac_h: DMatrix<T>,
}

impl<T: Scalar> PointData<T> {
    /// `max_i g_i(x)`, `-inf` when there are no inequalities.
    pub fn max_g(&self) -> T {
        crate::linalg::max_entry(&self.g)
    }

    pub fn norm_h(&self) -> T {
        norm_inf(&self.h)
    }

    /// `max(max_i [g_i]₊, ‖h‖∞)`.
    pub fn infeasibility(&self) -> T {
        self.max_g().max(T::zero()).max(self.norm_h())
    }
}

/// Partition of the inequality indices at a point (0-based).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSet {
    /// `|g_i(x)| ≤ ε`
    pub active: Vec<usize>,
    /// `g_i(x) > ε`
    pub violated: Vec<usize>,
    /// `g_i(x) < −ε`
    pub inactive: Vec<usize>,
}

/// Default activity threshold for reporting and analysis.
pub const DEFAULT_EPS_ACT: f64 = 1e-8;

/// Partitions constraint values `g` by the threshold `eps`.
pub fn classify_values<T: Scalar>(g: &DVector<T>, eps: T) -> ActiveSet {
    let mut out = ActiveSet::default();
    for (i, gi) in g.iter().enumerate() {
        if *gi > eps {
            out.violated.push(i);
        } else if *gi < -eps {
            out.inactive.push(i);
        } else {
            out.active.push(i);
        }
    }
    out
}

/// Central-difference step `ε^{1/3}(1 + ‖x‖∞)`.
pub fn fd_step<T: Scalar>(x: &DVector<T>) -> T {
    T::machine_eps().cbrt() * (T::one() + norm_inf(x))
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient<T: Scalar>(f: impl Fn(&DVector<T>) -> T, x: &DVector<T>) -> DVector<T> {
    let eta = fd_step(x);
    let two = T::lit(2.0);
    DVector::from_fn(x.len(), |j, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += eta;
        xm[j] -= eta;
        (f(&xp) - f(&xm)) / (two * eta)
    })
}

/// Central finite-difference Jacobian of a vector function (`rows × n`).
pub fn fd_jacobian<T: Scalar>(
    f: impl Fn(&DVector<T>) -> DVector<T>,
    x: &DVector<T>,
    rows: usize,
    eta: T,
) -> DMatrix<T> {
    let n = x.len();
    let two = T::lit(2.0);
    let mut jac = DMatrix::zeros(rows, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += eta;
        xm[j] -= eta;
        let d = (f(&xp) - f(&xm)) / (two * eta);
        jac.column_mut(j).copy_from(&d);
    }
    jac
}

fn symmetrize<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    (&m + m.transpose()) * T::lit(0.5)
}

impl<T: Scalar> Problem<T> {
    pub fn builder(name: impl Into<String>, n: usize) -> ProblemBuilder<T> {
        ProblemBuilder {
            name: name.into(),
            n,
            f: None,
            grad_f: None,
            m: 0,
            g: None,
            jac_g: None,
            k: 0,
            h: None,
            jac_h: None,
            hess_f: None,
            hess_g: None,
            hess_h: None,
            affine: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn has_affine_constraints(&self) -> bool {
        self.affine_constraints || (self.m == 0 && self.k == 0)
    }
    pub fn has_analytic_hessians(&self) -> bool {
        self.hess_f.is_some()
            && (self.m == 0 || self.hess_g.is_some())
            && (self.k == 0 || self.hess_h.is_some())
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        (self.grad_f)(x)
    }

    pub fn inequalities(&self, x: &DVector<T>) -> DVector<T> {
        match &self.g {
            Some(g) => g(x),
            None => DVector::zeros(0),
        }
    }

    pub fn inequality_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        match &self.jac_g {
            Some(j) => j(x),
            None => DMatrix::zeros(0, self.n),
        }
    }

    pub fn equalities(&self, x: &DVector<T>) -> DVector<T> {
        match &self.h {
            Some(h) => h(x),
            None => DVector::zeros(0),
        }
    }

    pub fn equality_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        match &self.jac_h {
            Some(j) => j(x),
            None => DMatrix::zeros(0, self.n),
        }
    }

    /// Evaluates `f, ∇f, g, ∂g/∂x, h, ∂h/∂x` once, checking shapes and finiteness.
    pub fn evaluate(&self, x: &DVector<T>) -> Result<PointData<T>, EvaluationError> {
        if x.len() != self.n {
            return Err(EvaluationError::PointDimension { expected: self.n, got: x.len() });
        }
        let f = self.objective(x);
        if !f.is_finite_value() {
            return Err(EvaluationError::NonFinite(Component::Objective));
        }
        let grad_f = self.gradient(x);
        check_vec(&grad_f, self.n, Component::Gradient)?;
        let g = self.inequalities(x);
        check_vec(&g, self.m, Component::Inequality)?;
        let jac_g = self.inequality_jacobian(x);
        check_mat(&jac_g, self.m, self.n, Component::InequalityJacobian)?;
        let h = self.equalities(x);
        check_vec(&h, self.k, Component::Equality)?;
        let jac_h = self.equality_jacobian(x);
        check_mat(&jac_h, self.k, self.n, Component::EqualityJacobian)?;
        Ok(PointData { x: x.clone(), f, grad_f, g, jac_g, h, jac_h })
    }

    /// Partition of the inequality constraints at `x` by activity threshold `eps`.
    pub fn classify_constraints(&self, x: &DVector<T>, eps: T) -> ActiveSet {
        classify_values(&self.inequalities(x), eps)
    }

    /// `∇²f(x)`, analytic when supplied, otherwise central differences of `∇f`.
    pub fn objective_hessian(&self, x: &DVector<T>) -> DMatrix<T> {
        match &self.hess_f {
            Some(hf) => hf(x),
            None => symmetrize(fd_jacobian(|y| self.gradient(y), x, self.n, fd_step(x))),
        }
    }

    /// `∇²g_i(x)`.
    pub fn inequality_hessian(&self, x: &DVector<T>, i: usize) -> DMatrix<T> {
        match &self.hess_g {
            Some(hg) => hg(x, i),
            None => symmetrize(fd_jacobian(
                |y| self.inequality_jacobian(y).row(i).transpose(),
                x,
                self.n,
                fd_step(x),
            )),
        }
    }

    /// `∇²h_j(x)`.
    pub fn equality_hessian(&self, x: &DVector<T>, j: usize) -> DMatrix<T> {
        match &self.hess_h {
            Some(hh) => hh(x, j),
            None => symmetrize(fd_jacobian(
                |y| self.equality_jacobian(y).row(j).transpose(),
                x,
                self.n,
                fd_step(x),
            )),
        }
    }

    /// Hessian of the Lagrangian `∇²f + Σ uᵢ∇²gᵢ + Σ vⱼ∇²hⱼ`.
    ///
    /// Affine constraints contribute nothing and are skipped.
    pub fn lagrangian_hessian(&self, x: &DVector<T>, u: &DVector<T>, v: &DVector<T>) -> DMatrix<T> {
        let mut q = self.objective_hessian(x);
        if self.affine_constraints {
            return q;
        }
        for i in 0..self.m {
            if u[i] != T::zero() {
                q += self.inequality_hessian(x, i) * u[i];
            }
        }
        for j in 0..self.k {
            if v[j] != T::zero() {
                q += self.equality_hessian(x, j) * v[j];
            }
        }
        q
    }
}

fn check_vec<T: Scalar>(v: &DVector<T>, len: usize, c: Component) -> Result<(), EvaluationError> {
    if v.len() != len {
        return Err(EvaluationError::Dimension { component: c, expected: (len, 1), got: (v.len(), 1) });
    }
    if !all_finite(v.as_slice()) {
        return Err(EvaluationError::NonFinite(c));
    }
    Ok(())
}

fn check_mat<T: Scalar>(
    m: &DMatrix<T>,
    rows: usize,
    cols: usize,
    c: Component,
) -> Result<(), EvaluationError> {
    if m.shape() != (rows, cols) {
        return Err(EvaluationError::Dimension { component: c, expected: (rows, cols), got: m.shape() });
    }
    if !all_finite(m.as_slice()) {
        return Err(EvaluationError::NonFinite(c));
    }
    Ok(())
}
