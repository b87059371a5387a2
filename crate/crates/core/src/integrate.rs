//! Time integration of flow fields.

use nalgebra::DVector;
use thiserror::Error;

use crate::flows::{FlowError, FlowEval, FlowField, FlowSpec};
use crate::model::Problem;
use crate::Scalar;

/// Divergence guard on `‖x‖`.
pub const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method<T> {
    Euler { h: T },
    Rk4 { h: T },
    /// Dormand–Prince 5(4) with local error control
    /// `|err_i| ≤ atol + rtol·max(‖x‖∞, ‖x_new‖∞)`.
    Adaptive { rtol: T, atol: T, h_init: T, h_max: T },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepperSpec<T> {
    pub method: Method<T>,
    /// Final time.
    pub horizon: T,
    /// Stop once `‖ξ‖ ≤ eps_conv`.
    pub eps_conv: T,
    /// Record every `record_every`-th accepted step (the first and last
    /// states are always recorded).
    pub record_every: usize,
    /// Safety cap on accepted plus rejected steps.
    pub max_steps: usize,
}

impl<T: Scalar> StepperSpec<T> {
    pub fn new(method: Method<T>, horizon: T) -> Self {
        StepperSpec { method, horizon, eps_conv: T::lit(1e-9), record_every: 1, max_steps: 5_000_000 }
    }

    pub fn euler(h: T, horizon: T) -> Self {
        Self::new(Method::Euler { h }, horizon)
    }

    pub fn rk4(h: T, horizon: T) -> Self {
        Self::new(Method::Rk4 { h }, horizon)
    }

    /// Adaptive stepper with `rtol = 1e−8`, `atol = 1e−10`.
    pub fn adaptive(horizon: T) -> Self {
        Self::new(
            Method::Adaptive { rtol: T::lit(1e-8), atol: T::lit(1e-10), h_init: T::lit(1e-3), h_max: T::infinity() },
            horizon,
        )
    }

    pub fn with_eps_conv(mut self, eps: T) -> Self {
        self.eps_conv = eps;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |what: &str| Err(IntegrateError::InvalidStepper(what.to_string()));
        let pos = |v: T| v > T::zero() && v.is_finite_value() || v == T::infinity();
        match self.method {
            Method::Euler { h } | Method::Rk4 { h } if !pos(h) || !h.is_finite_value() => return bad("h must be positive"),
            Method::Adaptive { rtol, atol, h_init, h_max }
                if !pos(rtol) || !(atol >= T::zero()) || !pos(h_init) || !pos(h_max) =>
            {
                return bad("adaptive tolerances and steps must be positive")
            }
            _ => {}
        }
        if !pos(self.horizon) || !self.horizon.is_finite_value() {
            return bad("horizon must be positive");
        }
        if !pos(self.eps_conv) {
            return bad("eps_conv must be positive");
        }
        Ok(())
    }
}

impl<T: Scalar> Default for StepperSpec<T> {
    fn default() -> Self {
        Self::adaptive(T::lit(50.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TerminalStatus {
    Converged,
    HorizonReached,
    /// The field could not be evaluated (for the safe gradient flow: the
    /// inner QP is infeasible). The last recorded state is the last valid one.
    FlowUndefined,
    Diverged,
    /// `max_steps` exhausted before the horizon.
    StepLimit,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "Converged",
            TerminalStatus::HorizonReached => "HorizonReached",
            TerminalStatus::FlowUndefined => "FlowUndefined",
            TerminalStatus::Diverged => "Diverged",
            TerminalStatus::StepLimit => "StepLimit",
        }
    }
}

/// Recorded trajectory. All per-step vectors have the same length.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Scalar> {
    pub flow: String,
    pub m: usize,
    pub k: usize,
    pub times: Vec<T>,
    /// Decision variable `x` (for the saddle-point flow, the `x` block).
    pub states: Vec<DVector<T>>,
    pub f: Vec<T>,
    pub speed: Vec<T>,
    /// `max_i g_i(x)`; `−∞` when `m = 0`.
    pub max_g: Vec<T>,
    /// `‖h(x)‖∞`; `0` when `k = 0`.
    pub norm_h: Vec<T>,
    /// Velocity of `x` at each recorded state.
    pub velocity: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub v: Vec<DVector<T>>,
    pub status: TerminalStatus,
    /// Why the flow became undefined, if it did.
    pub error: Option<FlowError>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub qp_iterations: usize,
    pub qp_solves: usize,
}

impl<T: Scalar> Trajectory<T> {
    fn empty(flow: &str, m: usize, k: usize) -> Self {
        Trajectory {
            flow: flow.to_string(),
            m,
            k,
            times: Vec::new(),
            states: Vec::new(),
            f: Vec::new(),
            speed: Vec::new(),
            max_g: Vec::new(),
            norm_h: Vec::new(),
            velocity: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            status: TerminalStatus::HorizonReached,
            error: None,
            accepted_steps: 0,
            rejected_steps: 0,
            qp_iterations: 0,
            qp_solves: 0,
        }
    }

    fn push(&mut self, t: T, x: DVector<T>, ev: &FlowEval<T>) {
        let n = x.len();
        self.times.push(t);
        self.states.push(x);
        self.f.push(ev.f);
        self.speed.push(ev.speed);
        self.max_g.push(ev.max_g);
        self.norm_h.push(ev.norm_h);
        self.velocity.push(ev.xi.rows(0, n).into_owned());
        self.u.push(ev.u.clone());
        self.v.push(ev.v.clone());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<T>> {
        self.states.last()
    }

    /// Constraint violation at recorded step `i`: `max(max g, ‖h‖∞)` over
    /// the constraint types that are present.
    pub fn violation(&self, i: usize) -> T {
        let mut v = -T::infinity();
        if self.m > 0 {
            v = v.max(self.max_g[i]);
        }
        if self.k > 0 {
            v = v.max(self.norm_h[i]);
        }
        v
    }

    /// Largest `‖Δξ‖/Δt` between consecutive recorded states.
    pub fn smoothness_proxy(&self) -> T {
        let mut best = T::zero();
        for i in 1..self.len() {
            let dt = self.times[i] - self.times[i - 1];
            if dt > T::zero() {
                best = best.max((&self.velocity[i] - &self.velocity[i - 1]).norm() / dt);
            }
        }
        best
    }
}

/// Largest constraint violation along a trajectory. For a trajectory that
/// stays in the interior this is negative; with no constraints at all it is
/// `−∞`.
pub fn invariance_margin<T: Scalar>(traj: &Trajectory<T>) -> T {
    (0..traj.len()).map(|i| traj.violation(i)).fold(-T::infinity(), |a, b| a.max(b))
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum IntegrateError {
    #[error("invalid stepper: {0}")]
    InvalidStepper(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("initial point has {got} entries, problem dimension is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("no stepsize in the grid is stable")]
    NoStableStep,
    #[error("stepsize grid must be nonempty, positive and decreasing")]
    BadGrid,
}

// Dormand–Prince 5(4) tableau (the field is autonomous, so stage times are not needed).
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus the embedded fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'f, 'p, T: Scalar> {
    field: &'f mut FlowField<'p, T>,
}

impl<T: Scalar> Stepper<'_, '_, T> {
    fn rhs(&mut self, y: &DVector<T>) -> Result<DVector<T>, FlowError> {
        Ok(self.field.eval(y)?.xi)
    }

    fn euler(&mut self, y: &DVector<T>, k1: &DVector<T>, h: T) -> DVector<T> {
        y + k1 * h
    }

    fn rk4(&mut self, y: &DVector<T>, k1: &DVector<T>, h: T) -> Result<DVector<T>, FlowError> {
        let half = h * T::lit(0.5);
        let k2 = self.rhs(&(y + k1 * half))?;
        let k3 = self.rhs(&(y + &k2 * half))?;
        let k4 = self.rhs(&(y + &k3 * h))?;
        Ok(y + (k1 + (k2 + k3) * T::lit(2.0) + k4) * (h / T::lit(6.0)))
    }

    /// One Dormand–Prince attempt; returns the fifth-order solution and the
    /// error vector.
    fn dopri(&mut self, y: &DVector<T>, k1: &DVector<T>, h: T) -> Result<(DVector<T>, DVector<T>), FlowError> {
        let mut ks: Vec<DVector<T>> = Vec::with_capacity(7);
        ks.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    ys.axpy(h * T::lit(a), kj, T::one());
                }
            }
            if s == 6 {
                // Stage 7 is evaluated at the fifth-order solution.
                let k7 = self.rhs(&ys)?;
                let mut err = DVector::zeros(y.len());
                for (j, kj) in ks.iter().chain(std::iter::once(&k7)).enumerate() {
                    if DP_E[j] != 0.0 {
                        err.axpy(h * T::lit(DP_E[j]), kj, T::one());
                    }
                }
                return Ok((ys, err));
            }
            ks.push(self.rhs(&ys)?);
        }
        unreachable!("stage loop returns at s = 6")
    }
}

/// Integrates `flow` on `p` from `x0`.
///
/// Errors are returned only for invalid arguments; a flow that is undefined
/// at `x0` yields a one-point trajectory with status `FlowUndefined`.
pub fn integrate<T: Scalar>(
    flow: FlowSpec<T>,
    p: &Problem<T>,
    x0: &DVector<T>,
    s: &StepperSpec<T>,
) -> Result<Trajectory<T>, IntegrateError> {
    s.validate()?;
    if x0.len() != p.n() {
        return Err(IntegrateError::Dimension { expected: p.n(), got: x0.len() });
    }
    let mut field = FlowField::new(p, flow)?;
    let traj = run(&mut field, x0, s);
    Ok(traj)
}

fn run<T: Scalar>(field: &mut FlowField<'_, T>, x0: &DVector<T>, s: &StepperSpec<T>) -> Trajectory<T> {
    let p = field.problem;
    let mut traj = Trajectory::empty(field.spec.label(), p.m(), p.k());
    let mut y = field.initial_state(x0);
    let finish = |traj: &mut Trajectory<T>, field: &FlowField<'_, T>, status| {
        traj.status = status;
        traj.qp_iterations = field.solver.total_iterations();
        traj.qp_solves = field.solver.total_solves();
    };
    let mut ev = match field.eval(&y) {
        Ok(ev) => ev,
        Err(e) => {
            record_undefined(&mut traj, p, x0);
            traj.error = Some(e);
            finish(&mut traj, field, TerminalStatus::FlowUndefined);
            return traj;
        }
    };
    let mut t = T::zero();
    traj.push(t, field.point(&y), &ev);
    if ev.speed <= s.eps_conv {
        finish(&mut traj, field, TerminalStatus::Converged);
        return traj;
    }
    let bound = T::lit(DIVERGENCE_BOUND);
    let (mut h, h_max) = match s.method {
        Method::Euler { h } | Method::Rk4 { h } => (h, h),
        Method::Adaptive { h_init, h_max, .. } => (h_init.min(h_max), h_max),
    };
    let h_floor = T::lit(1e-14) * s.horizon;
    let mut steps = 0usize;
    let mut recorded_last = true;
    let status = loop {
        if t >= s.horizon {
            break TerminalStatus::HorizonReached;
        }
        if steps >= s.max_steps {
            break TerminalStatus::StepLimit;
        }
        steps += 1;
        let h_try = h.min(s.horizon - t);
        let mut stepper = Stepper { field: &mut *field };
        let attempt = match s.method {
            Method::Euler { .. } => Ok((stepper.euler(&y, &ev.xi, h_try), None)),
            Method::Rk4 { .. } => stepper.rk4(&y, &ev.xi, h_try).map(|y1| (y1, None)),
            Method::Adaptive { .. } => stepper.dopri(&y, &ev.xi, h_try).map(|(y1, err)| (y1, Some(err))),
        };
        let (mut y_new, err) = match attempt {
            Ok(v) => v,
            Err(e) => {
                if let Method::Adaptive { .. } = s.method {
                    traj.rejected_steps += 1;
                    h = h_try * T::lit(0.25);
                    if h >= h_floor {
                        continue;
                    }
                }
                traj.error = Some(e);
                break TerminalStatus::FlowUndefined;
            }
        };
        if let (Method::Adaptive { rtol, atol, .. }, Some(err)) = (s.method, err) {
            let scale = atol + rtol * crate::linalg::norm_inf(&y).max(crate::linalg::norm_inf(&y_new));
            let ratio = crate::linalg::norm_inf(&err) / scale;
            if !ratio.is_finite_value() || ratio > T::one() {
                traj.rejected_steps += 1;
                let shrink = if ratio.is_finite_value() {
                    (T::lit(0.9) * ratio.powf(T::lit(-0.2))).max(T::lit(0.2))
                } else {
                    T::lit(0.25)
                };
                h = h_try * shrink;
                if h < h_floor {
                    traj.error = None;
                    break TerminalStatus::FlowUndefined;
                }
                continue;
            }
            let grow = if ratio > T::zero() { T::lit(0.9) * ratio.powf(T::lit(-0.2)) } else { T::lit(5.0) };
            h = (h_try * grow.min(T::lit(5.0)).max(T::lit(0.2))).min(h_max);
        }
        field.project_state(&mut y_new);
        if !crate::linalg::all_finite(y_new.as_slice()) || field.point(&y_new).norm() > bound {
            break TerminalStatus::Diverged;
        }
        let ev_new = match field.eval(&y_new) {
            Ok(ev) => ev,
            Err(e) => {
                if let Method::Adaptive { .. } = s.method {
                    traj.rejected_steps += 1;
                    h = h_try * T::lit(0.25);
                    if h >= h_floor {
                        continue;
                    }
                }
                traj.error = Some(e);
                break TerminalStatus::FlowUndefined;
            }
        };
        t += h_try;
        y = y_new;
        ev = ev_new;
        traj.accepted_steps += 1;
        recorded_last = traj.accepted_steps % s.record_every == 0;
        if recorded_last {
            traj.push(t, field.point(&y), &ev);
        }
        if ev.speed <= s.eps_conv {
            break TerminalStatus::Converged;
        }
    };
    if !recorded_last {
        traj.push(t, field.point(&y), &ev);
    }
    finish(&mut traj, field, status);
    traj
}

fn record_undefined<T: Scalar>(traj: &mut Trajectory<T>, p: &Problem<T>, x0: &DVector<T>) {
    let nan = T::nan();
    let (f, max_g, norm_h) = match p.evaluate(x0) {
        Ok(pd) => (pd.f, pd.max_g(), pd.norm_h()),
        Err(_) => (nan, nan, nan),
    };
    traj.times.push(T::zero());
    traj.states.push(x0.clone());
    traj.f.push(f);
    traj.speed.push(nan);
    traj.max_g.push(max_g);
    traj.norm_h.push(norm_h);
    traj.velocity.push(DVector::from_element(x0.len(), nan));
    traj.u.push(DVector::zeros(0));
    traj.v.push(DVector::zeros(0));
}

/// Settings for [`max_stable_stepsize`].
#[derive(Clone, Debug)]
pub struct StabilityOptions<T: Scalar> {
    /// Continuous-time horizon; every run takes at least `min_steps` steps.
    pub horizon: T,
    pub min_steps: usize,
    /// Allowed constraint violation beyond that of `x0`.
    pub eps_safe: T,
    /// Required distance of the final iterate to a KKT point.
    pub kkt_tol: T,
    /// Known KKT points; when empty, `‖𝒢_α(x_final)‖ ≤ kkt_tol` is used.
    pub kkt_points: Vec<DVector<T>>,
}

impl<T: Scalar> Default for StabilityOptions<T> {
    fn default() -> Self {
        StabilityOptions {
            horizon: T::lit(40.0),
            min_steps: 2000,
            eps_safe: T::lit(1e-6),
            kkt_tol: T::lit(1e-3),
            kkt_points: Vec::new(),
        }
    }
}

/// Outcome of one forward-Euler stability run.
#[derive(Clone, Debug)]
pub struct StabilityRun<T: Scalar> {
    pub h: T,
    pub stable: bool,
    pub margin: T,
    pub final_distance: T,
    pub status: TerminalStatus,
}

/// Forward-Euler runs of the safe gradient flow for each `h` in `h_grid`.
/// A run that exceeds the allowed violation is stopped early; its `status`
/// is then the status at the moment it was stopped.
pub fn stability_runs<T: Scalar>(
    p: &Problem<T>,
    x0: &DVector<T>,
    alpha: T,
    h_grid: &[T],
    opts: &StabilityOptions<T>,
) -> Result<Vec<StabilityRun<T>>, IntegrateError> {
    let mut runs = Vec::with_capacity(h_grid.len());
    sweep_stepsizes(p, x0, alpha, h_grid, opts, |r| {
        runs.push(r);
        true
    })?;
    Ok(runs)
}

/// Largest grid stepsize for which forward Euler on the safe gradient flow
/// stays within `max(eps_safe, violation(x0))` of the feasible set and ends
/// within `kkt_tol` of a KKT point.
pub fn max_stable_stepsize<T: Scalar>(
    p: &Problem<T>,
    x0: &DVector<T>,
    alpha: T,
    h_grid: &[T],
    opts: &StabilityOptions<T>,
) -> Result<T, IntegrateError> {
    let mut found = None;
    sweep_stepsizes(p, x0, alpha, h_grid, opts, |r| {
        if r.stable {
            found = Some(r.h);
        }
        found.is_none()
    })?;
    found.ok_or(IntegrateError::NoStableStep)
}

fn sweep_stepsizes<T: Scalar>(
    p: &Problem<T>,
    x0: &DVector<T>,
    alpha: T,
    h_grid: &[T],
    opts: &StabilityOptions<T>,
    mut visit: impl FnMut(StabilityRun<T>) -> bool,
) -> Result<(), IntegrateError> {
    if h_grid.is_empty() || h_grid.iter().any(|h| !(*h > T::zero())) || h_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(IntegrateError::BadGrid);
    }
    if x0.len() != p.n() {
        return Err(IntegrateError::Dimension { expected: p.n(), got: x0.len() });
    }
    let x0_violation = p.evaluate(x0).map_err(FlowError::from)?.infeasibility();
    let allowed = opts.eps_safe.max(x0_violation);
    let bound = T::lit(DIVERGENCE_BOUND);
    let mut field = FlowField::new(p, FlowSpec::safe_gradient(alpha))?;
    for &h in h_grid {
        let steps = (opts.horizon / h).ceil().to_usize().unwrap_or(usize::MAX).max(opts.min_steps);
        let mut x = x0.clone();
        let mut margin = -T::infinity();
        let mut status = TerminalStatus::HorizonReached;
        let mut speed = T::infinity();
        for _ in 0..=steps {
            let ev = match field.eval(&x) {
                Ok(ev) => ev,
                Err(_) => {
                    status = TerminalStatus::FlowUndefined;
                    break;
                }
            };
            let viol = if p.m() + p.k() > 0 { ev.violation() } else { -T::infinity() };
            margin = margin.max(viol);
            speed = ev.speed;
            if margin > allowed {
                break;
            }
            if ev.speed <= T::lit(1e-12) {
                status = TerminalStatus::Converged;
                break;
            }
            x += &ev.xi * h;
            if !crate::linalg::all_finite(x.as_slice()) || x.norm() > bound {
                status = TerminalStatus::Diverged;
                break;
            }
        }
        let final_distance = if opts.kkt_points.is_empty() {
            speed
        } else {
            opts.kkt_points.iter().map(|k| (&x - k).norm()).fold(T::infinity(), |a, b| a.min(b))
        };
        let ok_status = matches!(status, TerminalStatus::Converged | TerminalStatus::HorizonReached);
        let stable = ok_status && margin <= allowed && final_distance <= opts.kkt_tol;
        if !visit(StabilityRun { h, stable, margin, final_distance, status }) {
            break;
        }
    }
    Ok(())
}

/// Geometric grid `h_max · ratio^i`, `i = 0..count`.
pub fn geometric_grid<T: Scalar>(h_max: T, ratio: T, count: usize) -> Vec<T> {
    (0..count).map(|i| h_max * ratio.powi(i as i32)).collect()
}
