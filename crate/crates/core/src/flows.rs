//! Vector fields: the safe gradient flow and the baseline flows it is compared
//! against.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{max_entry, norm_inf, pinv, rank_info, select_rows, vstack};
use crate::model::{EvaluationError, PointData, Problem};
use crate::qp::{Polyhedron, QpError, QpSolver, QpStatus};
use crate::Scalar;

/// Relative singular value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// How the safe gradient velocity is computed. All three give the same `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Construction {
    /// Project `−∇f` onto `{ξ : Jg ξ ≤ −αg, Jh ξ = −αh}`.
    #[default]
    Projection,
    /// Minimum-norm control over the admissible set, `ξ = −∇f − Jgᵀu − Jhᵀv`.
    FeedbackQp,
    /// Lagrangian dual in `(u, v)`; multipliers lie in the inner multiplier set.
    DualQp,
}

impl Construction {
    pub const ALL: [Construction; 3] = [Construction::Projection, Construction::FeedbackQp, Construction::DualQp];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowSpec<T> {
    SafeGradient { alpha: T, construction: Construction },
    ProjectedGradient { eps_act: T },
    LogBarrier { mu: T },
    L2Penalty { eps_pen: T },
    /// Primal descent / dual ascent on the Lagrangian; state is `(x, u, v)`.
    SaddlePoint,
    GloballyProjected { eta: T },
    EqualityClosedForm { alpha: T },
}

impl<T: Scalar> FlowSpec<T> {
    pub fn safe_gradient(alpha: T) -> Self {
        FlowSpec::SafeGradient { alpha, construction: Construction::Projection }
    }

    /// Short name used in file names and tables.
    pub fn label(&self) -> &'static str {
        match self {
            FlowSpec::SafeGradient { .. } => "safe-gradient",
            FlowSpec::ProjectedGradient { .. } => "projected-gradient",
            FlowSpec::LogBarrier { .. } => "log-barrier",
            FlowSpec::L2Penalty { .. } => "l2-penalty",
            FlowSpec::SaddlePoint => "saddle-point",
            FlowSpec::GloballyProjected { .. } => "globally-projected",
            FlowSpec::EqualityClosedForm { .. } => "equality-closed-form",
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite_value() {
                Ok(())
            } else {
                Err(FlowError::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            FlowSpec::SafeGradient { alpha, .. } | FlowSpec::EqualityClosedForm { alpha } => positive("alpha", alpha),
            FlowSpec::ProjectedGradient { eps_act } => positive("eps_act", eps_act),
            FlowSpec::LogBarrier { mu } => positive("mu", mu),
            FlowSpec::L2Penalty { eps_pen } => positive("eps_pen", eps_pen),
            FlowSpec::GloballyProjected { eta } => positive("eta", eta),
            FlowSpec::SaddlePoint => Ok(()),
        }
    }
}

/// Value of a flow field at a state.
#[derive(Clone, Debug)]
pub struct FlowEval<T: Scalar> {
    /// Velocity. For the saddle-point flow this is `(ẋ, u̇, v̇)`.
    pub xi: DVector<T>,
    /// Inequality multipliers (empty for flows without them).
    pub u: DVector<T>,
    /// Equality multipliers (empty for flows without them).
    pub v: DVector<T>,
    pub status: QpStatus,
    /// Euclidean norm of `xi`.
    pub speed: T,
    pub f: T,
    pub max_g: T,
    pub norm_h: T,
}

impl<T: Scalar> FlowEval<T> {
    fn new(pd: &PointData<T>, xi: DVector<T>, u: DVector<T>, v: DVector<T>, status: QpStatus) -> Self {
        FlowEval { speed: xi.norm(), xi, u, v, status, f: pd.f, max_g: pd.max_g(), norm_h: pd.norm_h() }
    }

    /// Largest constraint violation `max(max g, ‖h‖∞)`.
    pub fn violation(&self) -> T {
        self.max_g.max(self.norm_h)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("constraint polyhedron is empty; the flow is undefined here")]
    Infeasible,
    #[error("point is infeasible (violation {0})")]
    InfeasiblePoint(f64),
    #[error("point outside the barrier domain (max g = {0})")]
    Domain(f64),
    #[error("flow does not support equality constraints")]
    UnsupportedEquality,
    #[error("flow does not support inequality constraints")]
    UnsupportedInequality,
    #[error("flow requires affine constraints")]
    NonPolyhedralUnsupported,
    #[error("constraint Jacobian is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("inner QP ended with status {0:?}")]
    Solver(QpStatus),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl FlowError {
    /// Whether the error means "the field is not defined at this point", as
    /// opposed to a usage or numerical failure.
    pub fn is_undefined_point(&self) -> bool {
        matches!(
            self,
            FlowError::Infeasible | FlowError::InfeasiblePoint(_) | FlowError::Domain(_) | FlowError::Evaluation(_)
        )
    }
}

fn accept(status: QpStatus) -> Result<QpStatus, FlowError> {
    match status {
        QpStatus::Optimal | QpStatus::Degenerate => Ok(status),
        QpStatus::Infeasible | QpStatus::Unbounded => Err(FlowError::Infeasible),
        QpStatus::IterLimit => Err(FlowError::Solver(status)),
    }
}

/// The polyhedron `{ξ : Jg ξ ≤ −αg, Jh ξ = −αh}`.
pub fn safe_polyhedron<T: Scalar>(pd: &PointData<T>, alpha: T) -> Polyhedron<T> {
    Polyhedron::new(pd.jac_g.clone(), &pd.g * -alpha, pd.jac_h.clone(), &pd.h * -alpha)
}

/// `−∇f − Jgᵀu − Jhᵀv`.
pub fn reconstruct_velocity<T: Scalar>(pd: &PointData<T>, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
    let mut xi = -&pd.grad_f;
    if !u.is_empty() {
        xi -= pd.jac_g.transpose() * u;
    }
    if !v.is_empty() {
        xi -= pd.jac_h.transpose() * v;
    }
    xi
}

/// Safe gradient flow at an already evaluated point.
pub fn safe_gradient_at<T: Scalar>(
    pd: &PointData<T>,
    alpha: T,
    construction: Construction,
    solver: &mut QpSolver<T>,
) -> Result<FlowEval<T>, FlowError> {
    if !(alpha > T::zero()) {
        return Err(FlowError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let (m, n) = (pd.g.len(), pd.x.len());
    match construction {
        Construction::Projection => {
            let sol = solver.project(&-&pd.grad_f, &safe_polyhedron(pd, alpha))?;
            let status = accept(sol.status)?;
            Ok(FlowEval::new(pd, sol.xi, sol.mult_ineq, sol.mult_eq, status))
        }
        Construction::FeedbackQp => {
            let sol = solver.feedback(pd, alpha)?;
            let status = accept(sol.status)?;
            let xi = reconstruct_velocity(pd, &sol.u, &sol.v);
            Ok(FlowEval::new(pd, xi, sol.u, sol.v, status))
        }
        Construction::DualQp => {
            let jac = vstack(&[&pd.jac_g, &pd.jac_h], n);
            let gram = &jac * jac.transpose();
            let rhs = crate::linalg::vcat(&[&pd.g, &pd.h]);
            let lin = &jac * &pd.grad_f - rhs * alpha;
            let sol = solver.solve_dual(&gram, &lin, m)?;
            let status = accept(sol.status)?;
            let xi = reconstruct_velocity(pd, &sol.u, &sol.v);
            Ok(FlowEval::new(pd, xi, sol.u, sol.v, status))
        }
    }
}

/// Safe gradient flow `𝒢_α(x)`.
pub fn safe_gradient_field<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    alpha: T,
    construction: Construction,
    solver: &mut QpSolver<T>,
) -> Result<FlowEval<T>, FlowError> {
    safe_gradient_at(&p.evaluate(x)?, alpha, construction, solver)
}

/// Projection of `−∇f` onto the tangent cone `{ξ : Jg_I ξ ≤ 0, Jh ξ = 0}`,
/// where `I` collects constraints with `g_i ≥ −eps_act`.
pub fn projected_gradient_field<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    eps_act: T,
    solver: &mut QpSolver<T>,
) -> Result<FlowEval<T>, FlowError> {
    let pd = p.evaluate(x)?;
    let viol = pd.infeasibility();
    if viol > eps_act {
        return Err(FlowError::InfeasiblePoint(viol.as_f64()));
    }
    let active: Vec<usize> = (0..pd.g.len()).filter(|&i| pd.g[i] >= -eps_act).collect();
    let a = select_rows(&pd.jac_g, &active);
    let poly = Polyhedron::new(a, DVector::zeros(active.len()), pd.jac_h.clone(), DVector::zeros(pd.h.len()));
    let sol = solver.project(&-&pd.grad_f, &poly)?;
    let status = accept(sol.status)?;
    let mut u = DVector::zeros(pd.g.len());
    for (r, &i) in active.iter().enumerate() {
        u[i] = sol.mult_ineq[r];
    }
    Ok(FlowEval::new(&pd, sol.xi, u, sol.mult_eq, status))
}

/// Negative gradient of `f − μ Σ log(−g_i)`.
pub fn log_barrier_field<T: Scalar>(p: &Problem<T>, x: &DVector<T>, mu: T) -> Result<FlowEval<T>, FlowError> {
    if p.k() > 0 {
        return Err(FlowError::UnsupportedEquality);
    }
    let pd = p.evaluate(x)?;
    let gmax = max_entry(&pd.g);
    if gmax >= T::zero() {
        return Err(FlowError::Domain(gmax.as_f64()));
    }
    let mut xi = -&pd.grad_f;
    for i in 0..pd.g.len() {
        xi += pd.jac_g.row(i).transpose() * (mu / pd.g[i]);
    }
    Ok(FlowEval::new(&pd, xi, DVector::zeros(0), DVector::zeros(0), QpStatus::Optimal))
}

/// Negative gradient of `f + (ε/2)(Σ[g_i]₊² + Σh_j²)`.
pub fn l2_penalty_field<T: Scalar>(p: &Problem<T>, x: &DVector<T>, eps_pen: T) -> Result<FlowEval<T>, FlowError> {
    let pd = p.evaluate(x)?;
    let gp = pd.g.map(|gi| gi.max(T::zero()));
    let mut xi = -&pd.grad_f;
    if !gp.is_empty() {
        xi -= pd.jac_g.transpose() * &gp * eps_pen;
    }
    if !pd.h.is_empty() {
        xi -= pd.jac_h.transpose() * &pd.h * eps_pen;
    }
    Ok(FlowEval::new(&pd, xi, DVector::zeros(0), DVector::zeros(0), QpStatus::Optimal))
}

/// Velocity of the projected saddle-point dynamics.
#[derive(Clone, Debug)]
pub struct SaddleEval<T: Scalar> {
    pub x_dot: DVector<T>,
    pub u_dot: DVector<T>,
    pub v_dot: DVector<T>,
    pub point: PointData<T>,
}

/// `ẋ = −∇f − Jgᵀu − Jhᵀv`, `u̇_i = g_i` if `u_i > 0` else `[g_i]₊`, `v̇ = h`.
pub fn saddle_point_field<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    v: &DVector<T>,
) -> Result<SaddleEval<T>, FlowError> {
    let pd = p.evaluate(x)?;
    if u.len() != pd.g.len() || v.len() != pd.h.len() {
        return Err(FlowError::InvalidParameter(format!(
            "multipliers have sizes ({}, {}), expected ({}, {})",
            u.len(),
            v.len(),
            pd.g.len(),
            pd.h.len()
        )));
    }
    if u.iter().any(|ui| *ui < T::zero()) {
        return Err(FlowError::InvalidParameter("u must be nonnegative".into()));
    }
    let x_dot = reconstruct_velocity(&pd, u, v);
    let u_dot = DVector::from_fn(u.len(), |i, _| if u[i] > T::zero() { pd.g[i] } else { pd.g[i].max(T::zero()) });
    let v_dot = pd.h.clone();
    Ok(SaddleEval { x_dot, u_dot, v_dot, point: pd })
}

/// `Π_C(x − η∇f) − x` for affine constraints, where the projection uses the
/// linearization `C = {y : Jg y ≤ Jg x − g, Jh y = Jh x − h}` (exact for
/// affine `g`, `h`).
pub fn globally_projected_field<T: Scalar>(
    p: &Problem<T>,
    x: &DVector<T>,
    eta: T,
    solver: &mut QpSolver<T>,
) -> Result<FlowEval<T>, FlowError> {
    if !p.has_affine_constraints() {
        return Err(FlowError::NonPolyhedralUnsupported);
    }
    let pd = p.evaluate(x)?;
    let b = &pd.jac_g * x - &pd.g;
    let e = &pd.jac_h * x - &pd.h;
    let poly = Polyhedron::new(pd.jac_g.clone(), b, pd.jac_h.clone(), e);
    let target = x - &pd.grad_f * eta;
    let sol = solver.project(&target, &poly)?;
    let status = accept(sol.status)?;
    Ok(FlowEval::new(&pd, sol.xi - x, sol.mult_ineq, sol.mult_eq, status))
}

/// Closed form for equality-only problems:
/// `ξ = −(I − Jh†Jh)∇f − α Jh† h`.
pub fn equality_closed_form_field<T: Scalar>(p: &Problem<T>, x: &DVector<T>, alpha: T) -> Result<FlowEval<T>, FlowError> {
    if p.m() > 0 {
        return Err(FlowError::UnsupportedInequality);
    }
    let pd = p.evaluate(x)?;
    let n = p.n();
    let k = p.k();
    if k == 0 {
        let xi = -&pd.grad_f;
        return Ok(FlowEval::new(&pd, xi, DVector::zeros(0), DVector::zeros(0), QpStatus::Optimal));
    }
    let tol = T::lit(RANK_TOL);
    let info = rank_info(&pd.jac_h, tol);
    if info.rank < k {
        return Err(FlowError::RankDeficient { rank: info.rank, rows: k });
    }
    let (jp, _) = pinv(&pd.jac_h, tol);
    let proj = DMatrix::identity(n, n) - &jp * &pd.jac_h;
    let xi = -(proj * &pd.grad_f) - &jp * &pd.h * alpha;
    // Multipliers from −∇f − Jhᵀv = ξ restricted to the normal space.
    let v = jp.transpose() * (-&pd.grad_f - &xi);
    Ok(FlowEval::new(&pd, xi, DVector::zeros(0), v, QpStatus::Optimal))
}

/// A flow bound to a problem, holding its own QP workspace. The state is `x`,
/// except for the saddle-point flow where it is `(x, u, v)`.
#[derive(Clone, Debug)]
pub struct FlowField<'a, T: Scalar> {
    pub problem: &'a Problem<T>,
    pub spec: FlowSpec<T>,
    pub solver: QpSolver<T>,
}

impl<'a, T: Scalar> FlowField<'a, T> {
    pub fn new(problem: &'a Problem<T>, spec: FlowSpec<T>) -> Result<Self, FlowError> {
        spec.validate()?;
        Ok(FlowField { problem, spec, solver: QpSolver::default() })
    }

    pub fn state_dim(&self) -> usize {
        match self.spec {
            FlowSpec::SaddlePoint => self.problem.n() + self.problem.m() + self.problem.k(),
            _ => self.problem.n(),
        }
    }

    /// Initial state for `x0`; saddle-point multipliers start at zero.
    pub fn initial_state(&self, x0: &DVector<T>) -> DVector<T> {
        let mut s = DVector::zeros(self.state_dim());
        s.rows_mut(0, x0.len().min(self.problem.n())).copy_from(&x0.rows(0, x0.len().min(self.problem.n())));
        s
    }

    /// Decision variable part of a state.
    pub fn point(&self, state: &DVector<T>) -> DVector<T> {
        state.rows(0, self.problem.n()).into_owned()
    }

    /// Map a state back onto the flow's domain after a discrete step
    /// (clamps saddle-point `u` at zero).
    pub fn project_state(&self, state: &mut DVector<T>) {
        if let FlowSpec::SaddlePoint = self.spec {
            let n = self.problem.n();
            for i in n..n + self.problem.m() {
                state[i] = state[i].max(T::zero());
            }
        }
    }

    pub fn eval(&mut self, state: &DVector<T>) -> Result<FlowEval<T>, FlowError> {
        let p = self.problem;
        if state.len() != self.state_dim() {
            return Err(EvaluationError::PointDimension { expected: self.state_dim(), got: state.len() }.into());
        }
        match self.spec {
            FlowSpec::SafeGradient { alpha, construction } => {
                safe_gradient_field(p, state, alpha, construction, &mut self.solver)
            }
            FlowSpec::ProjectedGradient { eps_act } => projected_gradient_field(p, state, eps_act, &mut self.solver),
            FlowSpec::LogBarrier { mu } => log_barrier_field(p, state, mu),
            FlowSpec::L2Penalty { eps_pen } => l2_penalty_field(p, state, eps_pen),
            FlowSpec::GloballyProjected { eta } => globally_projected_field(p, state, eta, &mut self.solver),
            FlowSpec::EqualityClosedForm { alpha } => equality_closed_form_field(p, state, alpha),
            FlowSpec::SaddlePoint => {
                let (n, m, k) = (p.n(), p.m(), p.k());
                let x = state.rows(0, n).into_owned();
                let u = state.rows(n, m).map(|ui| ui.max(T::zero()));
                let v = state.rows(n + m, k).into_owned();
                let s = saddle_point_field(p, &x, &u, &v)?;
                let xi = crate::linalg::vcat(&[&s.x_dot, &s.u_dot, &s.v_dot]);
                Ok(FlowEval::new(&s.point, xi, u, v, QpStatus::Optimal))
            }
        }
    }
}

/// Largest violation of the safe-gradient constraints `Jg ξ ≤ −αg`,
/// `Jh ξ = −αh` by a velocity.
pub fn safe_constraint_violation<T: Scalar>(pd: &PointData<T>, alpha: T, xi: &DVector<T>) -> T {
    safe_polyhedron(pd, alpha).violation(xi)
}

/// Check tolerance for the safe-gradient constraints: `1e−8·(1 + α‖(g,h)‖∞)`.
pub fn safe_constraint_tol<T: Scalar>(pd: &PointData<T>, alpha: T) -> T {
    T::lit(1e-8) * (T::one() + alpha * norm_inf(&pd.g).max(norm_inf(&pd.h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fd_gradient;

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
            .affine_constraints()
            .build()
    }

    fn hyperplane(grad: (f64, f64)) -> Problem<f64> {
        Problem::builder("hyperplane", 2)
            .objective(
                move |x: &DVector<f64>| grad.0 * x[0] + grad.1 * x[1],
                move |_: &DVector<f64>| DVector::from_vec(vec![grad.0, grad.1]),
            )
            .equalities(
                1,
                |x: &DVector<f64>| DVector::from_vec(vec![x[0]]),
                |_: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            )
            .affine_constraints()
            .build()
    }

    fn one_dim(f: fn(f64) -> f64, df: fn(f64) -> f64, g: fn(f64) -> f64, dg: fn(f64) -> f64) -> Problem<f64> {
        Problem::builder("1d", 1)
            .objective(move |x: &DVector<f64>| f(x[0]), move |x: &DVector<f64>| DVector::from_element(1, df(x[0])))
            .inequalities(
                1,
                move |x: &DVector<f64>| DVector::from_element(1, g(x[0])),
                move |x: &DVector<f64>| DMatrix::from_element(1, 1, dg(x[0])),
            )
            .build()
    }

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn unconstrained_is_negative_gradient() {
        let p = Problem::<f64>::builder("quad", 2)
            .objective(
                |x: &DVector<f64>| x.norm_squared(),
                |x: &DVector<f64>| x * 2.0,
            )
            .build();
        let mut s = QpSolver::default();
        let x = v2(1.0, -2.0);
        for c in Construction::ALL {
            let e = safe_gradient_field(&p, &x, 1.0, c, &mut s).unwrap();
            assert!((e.xi - v2(-2.0, 4.0)).amax() < 1e-14);
        }
    }

    #[test]
    fn fig3_kkt_point_is_equilibrium() {
        let p = fig3();
        let mut s = QpSolver::default();
        for alpha in [0.1, 1.0, 10.0] {
            let e = safe_gradient_field(&p, &v2(0.25, 0.25), alpha, Construction::Projection, &mut s).unwrap();
            assert!(e.xi.amax() < 1e-12);
            assert!((e.u - v2(0.0, 0.375)).amax() < 1e-12);
            let d = safe_gradient_field(&p, &v2(0.25, 0.25), alpha, Construction::DualQp, &mut s).unwrap();
            assert!((d.u - v2(0.0, 0.375)).amax() < 1e-9);
        }
    }

    #[test]
    fn fig3_alpha_sweep_approaches_projected_gradient() {
        let p = fig3();
        let mut s = QpSolver::default();
        let x = v2(0.0, 0.001);
        let pg = projected_gradient_field(&p, &x, 1e-8, &mut s).unwrap().xi;
        let errs: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&a| (safe_gradient_field(&p, &x, a, Construction::Projection, &mut s).unwrap().xi - &pg).norm())
            .collect();
        // On x₁ = 0 the error is max(0, 0.75 + 0.5x₂ − αx₂)/√2.
        for (e, a) in errs.iter().zip([1.0, 10.0, 100.0, 1000.0]) {
            assert!((e - f64::max(0.0, 0.75 + 0.0005 - a * 0.001) / 2f64.sqrt()).abs() < 1e-12, "{errs:?}");
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0), "{errs:?}");
        assert!(errs[3] < 1e-2);
    }

    #[test]
    fn projected_gradient_examples() {
        let p = fig3();
        let mut s = QpSolver::default();
        let e = projected_gradient_field(&p, &v2(0.0, 0.0), 1e-8, &mut s).unwrap();
        assert!((e.xi - v2(0.125, 0.125)).amax() < 1e-12);
        let e = projected_gradient_field(&p, &v2(0.25, 0.25), 1e-8, &mut s).unwrap();
        assert!(e.xi.amax() < 1e-12);
        let e = projected_gradient_field(&p, &v2(0.1, 0.5), 1e-8, &mut s).unwrap();
        assert!((e.xi + p.gradient(&v2(0.1, 0.5))).amax() < 1e-15);
        assert!(matches!(
            projected_gradient_field(&p, &v2(-0.75, 0.1), 1e-8, &mut s),
            Err(FlowError::InfeasiblePoint(_))
        ));
    }

    #[test]
    fn log_barrier_matches_finite_difference() {
        let p = one_dim(|x| 0.5 * x * x, |x| x, |x| x - 1.0, |_| 1.0);
        let mu = 1.0;
        let x = DVector::from_element(1, 0.0);
        let e = log_barrier_field(&p, &x, mu).unwrap();
        let fd = fd_gradient(|y: &DVector<f64>| 0.5 * y[0] * y[0] - mu * (1.0 - y[0]).ln(), &x);
        assert!((e.xi[0] + fd[0]).abs() < 1e-8);
        assert!((e.xi[0] + 1.0).abs() < 1e-15);
        let p = fig3();
        let x = v2(0.2, 0.6);
        let e = log_barrier_field(&p, &x, 0.1).unwrap();
        let fd = fd_gradient(
            |y: &DVector<f64>| p.objective(y) - 0.1 * p.inequalities(y).iter().map(|g| (-g).ln()).sum::<f64>(),
            &x,
        );
        assert!((e.xi + fd).amax() < 1e-8);
        assert!(matches!(log_barrier_field(&p, &v2(0.0, 0.5), 0.1), Err(FlowError::Domain(_))));
        let tiny = log_barrier_field(&p, &x, 1e-12).unwrap();
        assert!((tiny.xi + p.gradient(&x)).amax() < 1e-10);
        assert!(matches!(log_barrier_field(&hyperplane((1.0, 1.0)), &v2(0.0, 0.0), 0.1), Err(FlowError::UnsupportedEquality)));
    }

    #[test]
    fn l2_penalty_examples() {
        let p = one_dim(|_| 0.0, |_| 0.0, |x| x, |_| 1.0);
        let e = l2_penalty_field(&p, &DVector::from_element(1, 2.0), 1.0).unwrap();
        let fd = fd_gradient(|y: &DVector<f64>| 0.5 * y[0].max(0.0).powi(2), &DVector::from_element(1, 2.0));
        assert!((e.xi[0] + 2.0).abs() < 1e-15 && (e.xi[0] + fd[0]).abs() < 1e-8);
        let e = l2_penalty_field(&p, &DVector::from_element(1, 0.0), 1.0).unwrap();
        assert_eq!(e.xi[0], 0.0);
        let q = fig3();
        let x = v2(0.2, 0.6);
        let e = l2_penalty_field(&q, &x, 10.0).unwrap();
        assert_eq!(e.xi, -q.gradient(&x));
    }

    #[test]
    fn saddle_point_examples() {
        let p = fig3();
        let s = saddle_point_field(&p, &v2(0.25, 0.25), &v2(0.0, 0.375), &DVector::zeros(0)).unwrap();
        assert!(s.x_dot.amax() < 1e-15 && s.u_dot.amax() < 1e-15);
        let s = saddle_point_field(&p, &v2(0.2, 0.6), &v2(0.0, 0.0), &DVector::zeros(0)).unwrap();
        assert_eq!(s.u_dot, v2(0.0, 0.0));
        let s = saddle_point_field(&p, &v2(0.2, 0.6), &v2(0.0, 1.0), &DVector::zeros(0)).unwrap();
        assert!((s.u_dot - v2(0.0, -0.4)).amax() < 1e-15);
    }

    #[test]
    fn globally_projected_examples() {
        let p = fig3();
        let mut s = QpSolver::default();
        let x = v2(0.3, 0.8);
        let e = globally_projected_field(&p, &x, 0.1, &mut s).unwrap();
        assert!((e.xi + p.gradient(&x) * 0.1).amax() < 1e-14);
        let e = globally_projected_field(&p, &v2(0.25, 0.25), 1.0, &mut s).unwrap();
        assert!(e.xi.amax() < 1e-12);
        let circle = one_dim(|x| x * x, |x| 2.0 * x, |x| 1.0 - x * x, |x| -2.0 * x);
        assert!(matches!(
            globally_projected_field(&circle, &DVector::from_element(1, 2.0), 1.0, &mut s),
            Err(FlowError::NonPolyhedralUnsupported)
        ));
    }

    #[test]
    fn equality_closed_form_examples() {
        let (a, b) = (0.7, -1.3);
        let p = hyperplane((a, b));
        let mut s = QpSolver::default();
        let e = equality_closed_form_field(&p, &v2(0.0, 2.0), 3.0).unwrap();
        assert!((&e.xi - v2(0.0, -b)).amax() < 1e-15);
        let e = equality_closed_form_field(&p, &v2(0.5, 2.0), 3.0).unwrap();
        assert!((&e.xi - v2(-1.5, -b)).amax() < 1e-14);
        let q = safe_gradient_field(&p, &v2(0.5, 2.0), 3.0, Construction::Projection, &mut s).unwrap();
        assert!((q.xi - e.xi).amax() < 1e-12);
        assert!((q.v - e.v).amax() < 1e-12);
        assert!(matches!(equality_closed_form_field(&fig3(), &v2(0.0, 0.0), 1.0), Err(FlowError::UnsupportedInequality)));
    }

    #[test]
    fn infeasible_polyhedron_is_reported() {
        // g = (x, −x + 1) with identical gradients up to sign and incompatible
        // right-hand sides has no admissible velocity only when the rows
        // are parallel: x ≤ 0 and −x ≤ −1 at x = 0.5 ask ξ ≤ −α/2, −ξ ≤ −α/2.
        let p = Problem::<f64>::builder("parallel", 1)
            .objective(|_: &DVector<f64>| 0.0, |_: &DVector<f64>| DVector::zeros(1))
            .inequalities(
                2,
                |x: &DVector<f64>| DVector::from_vec(vec![x[0], 1.0 - x[0]]),
                |_: &DVector<f64>| DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            )
            .build();
        let mut s = QpSolver::default();
        for c in Construction::ALL {
            let r = safe_gradient_field(&p, &DVector::from_element(1, 0.5), 1.0, c, &mut s);
            assert_eq!(r.unwrap_err(), FlowError::Infeasible, "{c:?}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(FlowSpec::<f64>::LogBarrier { mu: 0.0 }.validate().is_err());
        assert!(FlowSpec::<f64>::safe_gradient(-1.0).validate().is_err());
        assert!(FlowSpec::<f64>::SaddlePoint.validate().is_ok());
    }

    #[test]
    fn f32_safe_gradient() {
        let p = Problem::<f32>::builder("f32", 2)
            .objective(|x: &DVector<f32>| x.norm_squared(), |x: &DVector<f32>| x * 2.0)
            .inequalities(
                1,
                |x: &DVector<f32>| DVector::from_element(1, 1.0 - x[0]),
                |_: &DVector<f32>| DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            )
            .build();
        let mut s = QpSolver::default();
        let e = safe_gradient_field(&p, &DVector::from_vec(vec![1.0f32, 0.0]), 1.0, Construction::Projection, &mut s)
            .unwrap();
        assert!(e.xi.amax() < 1e-5);
        assert!((e.u[0] - 2.0).abs() < 1e-4);
    }
}
