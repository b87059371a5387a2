use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use sgflow::analysis::{alpha_lower_bound, check_cq, flow_jacobian, kkt_report, value_function_diag};
use sgflow::flows::{projected_gradient_field, safe_gradient_field};
use sgflow::integrate::{geometric_grid, integrate, invariance_margin, max_stable_stepsize, Method, StabilityOptions};
use sgflow::{Construction, FlowError, FlowSpecF64, QpSolverF64, StepperSpecF64, TrajectoryF64};

use crate::args::{AnalyzeArgs, CompareArgs, ConstructionArg, FlowArgs, FlowParams, StepperArgs, SweepArgs, SweepKind};
use crate::error::{CliError, Result};
use crate::output::{emit, fmt_num, save_trajectory, to_json, write_json, write_trajectory};
use crate::problem_file::{load_problem, LoadedProblem};

pub const DEFAULT_METHODS: [&str; 6] =
    ["sgf", "projected-gradient", "log-barrier", "l2-penalty", "saddle-point", "globally-projected"];

pub fn parse_vector(s: &str, what: &str) -> Result<DVector<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(DVector::from_vec(v)),
        _ => Err(CliError::usage(format!("{what}: expected comma-separated finite numbers, got '{s}'"))),
    }
}

fn parse_point(s: &str, n: usize, what: &str) -> Result<DVector<f64>> {
    let x = parse_vector(s, what)?;
    if x.len() != n {
        return Err(CliError::usage(format!("{what} has {} entries, problem dimension is {n}", x.len())));
    }
    Ok(x)
}

/// Nonempty list of positive finite values.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(CliError::usage("grid is empty"));
    }
    let v = parse_vector(s, "grid")?;
    if v.iter().any(|a| *a <= 0.0) {
        return Err(CliError::usage("grid values must be positive"));
    }
    Ok(v.iter().copied().collect())
}

pub fn parse_method(name: &str, p: &FlowParams) -> Result<FlowSpecF64> {
    let construction = match p.construction {
        ConstructionArg::Projection => Construction::Projection,
        ConstructionArg::Feedback => Construction::FeedbackQp,
        ConstructionArg::Dual => Construction::DualQp,
    };
    let spec = match name.trim() {
        "sgf" | "safe-gradient" => FlowSpecF64::SafeGradient { alpha: p.alpha, construction },
        "pg" | "projected-gradient" => FlowSpecF64::ProjectedGradient { eps_act: p.eps_act },
        "log-barrier" => FlowSpecF64::LogBarrier { mu: p.mu },
        "l2-penalty" => FlowSpecF64::L2Penalty { eps_pen: p.eps_pen },
        "saddle-point" => FlowSpecF64::SaddlePoint,
        "globally-projected" => FlowSpecF64::GloballyProjected { eta: p.eta },
        "equality-closed-form" => FlowSpecF64::EqualityClosedForm { alpha: p.alpha },
        other => return Err(CliError::usage(format!("unknown method '{other}'"))),
    };
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(spec)
}

pub fn parse_stepper(a: &StepperArgs) -> Result<StepperSpecF64> {
    let bad = || CliError::usage(format!("bad stepper '{}'", a.stepper));
    let (kind, rest) = a.stepper.split_once(':').map_or((a.stepper.as_str(), None), |(k, r)| (k, Some(r)));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let mut spec = match (kind, rest) {
        ("euler", Some(h)) => StepperSpecF64::euler(num(h)?, a.horizon),
        ("rk4", Some(h)) => StepperSpecF64::rk4(num(h)?, a.horizon),
        ("adaptive", None) => StepperSpecF64::adaptive(a.horizon),
        ("adaptive", Some(tols)) => {
            let mut s = StepperSpecF64::adaptive(a.horizon);
            let parts: Vec<&str> = tols.split(',').collect();
            if let Method::Adaptive { rtol, atol, .. } = &mut s.method {
                match parts.as_slice() {
                    [r] => *rtol = num(r)?,
                    [r, at] => {
                        *rtol = num(r)?;
                        *atol = num(at)?;
                    }
                    _ => return Err(bad()),
                }
            }
            s
        }
        _ => return Err(bad()),
    };
    spec = spec.with_eps_conv(a.eps_conv).with_record_every(a.record_every);
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(spec)
}

/// Caps rayon parallelism at `SGFLOW_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("SGFLOW_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("SGFLOW_THREADS must be a positive integer, got '{s}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn initial_point(lp: &LoadedProblem, x0: Option<&str>) -> Result<DVector<f64>> {
    match x0 {
        Some(s) => parse_point(s, lp.problem.n(), "x0"),
        None => lp.default_x0.clone().ok_or_else(|| CliError::usage("problem has no default x0; pass --x0")),
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSummary {
    pub problem: String,
    pub method: String,
    pub x0: Vec<f64>,
    pub terminal_state: Vec<f64>,
    pub terminal_time: f64,
    pub status: String,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub recorded_points: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub qp_iterations: usize,
    pub qp_solves: usize,
    /// Largest constraint violation along the trajectory; `null` without constraints.
    pub invariance_margin: Option<f64>,
    pub distance_to_kkt: Option<f64>,
}

/// Outcome of one method run.
pub struct Run {
    pub trajectory: TrajectoryF64,
    pub summary: FlowSummary,
}

impl Run {
    /// Undefined at `x0` because of where `x0` is (exit 3), rather than
    /// because the method cannot handle the problem.
    pub fn undefined_at_start(&self) -> Option<&FlowError> {
        self.trajectory.error.as_ref().filter(|_| self.trajectory.len() <= 1)
    }
}

pub fn run_method(lp: &LoadedProblem, spec: FlowSpecF64, x0: &DVector<f64>, stepper: &StepperSpecF64) -> Result<Run> {
    let start = Instant::now();
    let traj = integrate(spec, &lp.problem, x0, stepper).map_err(|e| CliError::usage(e.to_string()))?;
    let wall = start.elapsed().as_secs_f64();
    let xf = traj.final_state().cloned().unwrap_or_else(|| x0.clone());
    let summary = FlowSummary {
        problem: lp.problem.name().to_string(),
        method: spec.label().to_string(),
        x0: x0.iter().copied().collect(),
        terminal_state: xf.iter().copied().collect(),
        terminal_time: traj.times.last().copied().unwrap_or(0.0),
        status: traj.status.as_str().to_string(),
        error: traj.error.as_ref().map(|e| e.to_string()),
        wall_time_s: wall,
        recorded_points: traj.len(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        qp_iterations: traj.qp_iterations,
        qp_solves: traj.qp_solves,
        invariance_margin: finite(invariance_margin(&traj)),
        distance_to_kkt: lp.distance_to_kkt(&xf),
    };
    Ok(Run { trajectory: traj, summary })
}

fn report_warnings(lp: &LoadedProblem) {
    for w in &lp.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn cmd_flow(a: &FlowArgs) -> Result<Run> {
    let lp = load_problem(&a.problem)?;
    report_warnings(&lp);
    let spec = parse_method(&a.method, &a.params)?;
    let stepper = parse_stepper(&a.stepper)?;
    let x0 = initial_point(&lp, a.x0.as_deref())?;
    let run = run_method(&lp, spec, &x0, &stepper)?;
    if let Some(e) = run.undefined_at_start() {
        return Err(if e.is_undefined_point() {
            CliError::FlowUndefined(e.to_string())
        } else {
            CliError::usage(format!("{} cannot be used on {}: {e}", spec.label(), lp.problem.name()))
        });
    }
    match &a.out {
        Some(path) => {
            save_trajectory(&run.trajectory, path)?;
            let summary_path = a.summary.clone().unwrap_or_else(|| path.with_extension("summary.json"));
            write_json(&run.summary, &summary_path)?;
            emit(&to_json(&run.summary), None)?;
        }
        None => {
            let mut buf = Vec::new();
            write_trajectory(&run.trajectory, &mut buf).map_err(|e| CliError::io("<stdout>", e))?;
            emit(&String::from_utf8(buf).expect("utf-8"), None)?;
            if let Some(p) = &a.summary {
                write_json(&run.summary, p)?;
            }
        }
    }
    eprintln!(
        "{}: {} at t = {} after {} steps, x = {:?}",
        run.summary.method,
        run.summary.status,
        fmt_num(run.summary.terminal_time),
        run.summary.accepted_steps,
        run.summary.terminal_state
    );
    Ok(run)
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub method: String,
    /// Terminal status, or `unsupported` when the method rejects the problem.
    pub status: String,
    pub converged_to: Option<Vec<f64>>,
    pub distance_to_x_star: Option<f64>,
    pub max_invariance_margin: Option<f64>,
    /// `max ‖Δξ‖/Δt` over consecutive recorded states.
    pub smoothness_proxy: Option<f64>,
    pub csv: Option<PathBuf>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub problem: String,
    pub x0: Vec<f64>,
    pub x_star: Option<Vec<f64>>,
    pub rows: Vec<CompareRow>,
}

fn compare_row(lp: &LoadedProblem, label: &str, run: Result<Run>, dir: Option<&Path>) -> Result<CompareRow> {
    let run = match run {
        Ok(r) => r,
        Err(CliError::Usage(msg)) => {
            return Ok(CompareRow {
                method: label.to_string(),
                status: "unsupported".into(),
                converged_to: None,
                distance_to_x_star: None,
                max_invariance_margin: None,
                smoothness_proxy: None,
                csv: None,
                note: Some(msg),
            })
        }
        Err(e) => return Err(e),
    };
    let unsupported = run.undefined_at_start().is_some_and(|e| !e.is_undefined_point());
    let mut csv = None;
    if let (Some(d), false) = (dir, unsupported) {
        let path = d.join(format!("{label}.csv"));
        save_trajectory(&run.trajectory, &path)?;
        csv = Some(path);
    }
    let defined = run.undefined_at_start().is_none();
    Ok(CompareRow {
        method: label.to_string(),
        status: if unsupported { "unsupported".into() } else { run.summary.status.clone() },
        converged_to: defined.then(|| run.summary.terminal_state.clone()),
        distance_to_x_star: if defined { lp.distance_to_kkt(run.trajectory.final_state().expect("nonempty")) } else { None },
        max_invariance_margin: if defined { run.summary.invariance_margin } else { None },
        smoothness_proxy: defined.then(|| run.trajectory.smoothness_proxy()),
        csv,
        note: run.summary.error.clone(),
    })
}

pub fn cmd_compare(a: &CompareArgs) -> Result<Comparison> {
    let lp = load_problem(&a.problem)?;
    report_warnings(&lp);
    let stepper = parse_stepper(&a.stepper)?;
    let x0 = initial_point(&lp, a.x0.as_deref())?;
    let names: Vec<&str> = a.methods.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::usage("empty method list"));
    }
    let specs = names.iter().map(|n| parse_method(n, &a.params)).collect::<Result<Vec<_>>>()?;
    if let Some(d) = &a.out_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let pool = thread_pool()?;
    let runs: Vec<Result<Run>> = pool.install(|| specs.par_iter().map(|s| run_method(&lp, *s, &x0, &stepper)).collect());
    let mut rows = Vec::with_capacity(runs.len());
    for (spec, run) in specs.iter().zip(runs) {
        rows.push(compare_row(&lp, spec.label(), run, a.out_dir.as_deref())?);
    }
    let cmp = Comparison {
        problem: lp.problem.name().to_string(),
        x0: x0.iter().copied().collect(),
        x_star: lp.primary_kkt().map(|k| k.x.iter().copied().collect()),
        rows,
    };
    if let Some(d) = &a.out_dir {
        write_json(&cmp, &d.join("comparison.json"))?;
    }
    emit(&to_json(&cmp), None)?;
    Ok(cmp)
}

#[derive(Clone, Debug, Serialize)]
pub struct Multipliers {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct KktJson {
    pub stationarity: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub tol: f64,
    pub is_kkt: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CqJson {
    pub active: Vec<usize>,
    pub violated: Vec<usize>,
    pub licq: bool,
    pub rank: usize,
    pub rows: usize,
    pub sigma_min: Option<f64>,
    pub mfcq: bool,
    pub mfcq_margin: f64,
    pub emfcq: bool,
    pub emfcq_margin: f64,
    pub jh_full_rank: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobianJson {
    /// `[re, im]` pairs, sorted by real part.
    pub eigenvalues: Vec<[f64; 2]>,
    pub predicted: Vec<f64>,
    pub r: usize,
    pub fd_discrepancy: f64,
    pub spectrum_error: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueJson {
    pub w: f64,
    pub grad_w: Vec<f64>,
    /// Spectral radius of the Lagrangian Hessian at `(x, u, v)`.
    pub rho_q: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub problem: String,
    pub x: Vec<f64>,
    pub alpha: f64,
    pub velocity: Option<Vec<f64>>,
    pub speed: Option<f64>,
    /// Multipliers of the dual QP (a point of the inner multiplier set).
    pub dual_multipliers: Option<Multipliers>,
    /// Multipliers of the feedback QP; may differ from the dual ones.
    pub feedback_multipliers: Option<Multipliers>,
    /// `"given"` or `"dual"`: which multipliers the reports below use.
    pub multipliers_used: String,
    pub kkt: KktJson,
    pub cq: CqJson,
    /// Absent when the Jacobian is undefined; see `jacobian_error`.
    pub jacobian: Option<JacobianJson>,
    pub jacobian_error: Option<String>,
    pub value_function: Option<ValueJson>,
    pub value_function_error: Option<String>,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<AnalyzeReport> {
    let lp = load_problem(&a.problem)?;
    report_warnings(&lp);
    let p = &lp.problem;
    let x = parse_point(&a.x, p.n(), "x")?;
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return Err(CliError::usage("alpha must be positive"));
    }
    p.evaluate(&x).map_err(|e| CliError::FlowUndefined(e.to_string()))?;
    let mut solver = QpSolverF64::default();
    let mult = |c: Construction, solver: &mut QpSolverF64| {
        safe_gradient_field(p, &x, a.alpha, c, solver)
            .ok()
            .map(|e| Multipliers { u: vec_of(&e.u), v: vec_of(&e.v), status: format!("{:?}", e.status) })
    };
    let dual = mult(Construction::DualQp, &mut solver);
    let feedback = mult(Construction::FeedbackQp, &mut solver);
    let proj = safe_gradient_field(p, &x, a.alpha, Construction::Projection, &mut solver).ok();

    let given = a.u.is_some() || a.v.is_some();
    let pick = |s: &Option<String>, len: usize, from_dual: Option<&Vec<f64>>, what: &str| -> Result<DVector<f64>> {
        match s {
            Some(s) if len == 0 && s.trim().is_empty() => Ok(DVector::zeros(0)),
            Some(s) => parse_point(s, len, what),
            None if given => Ok(DVector::zeros(len)),
            None => Ok(from_dual.map_or_else(|| DVector::zeros(len), |v| DVector::from_vec(v.clone()))),
        }
    };
    let u = pick(&a.u, p.m(), dual.as_ref().map(|d| &d.u), "u")?;
    let v = pick(&a.v, p.k(), dual.as_ref().map(|d| &d.v), "v")?;

    let kkt = kkt_report(p, &x, &u, &v, a.kkt_tol).map_err(|e| CliError::usage(e.to_string()))?;
    let cq = check_cq(p, &x, a.eps_act).map_err(|e| CliError::usage(e.to_string()))?;
    let jacobian = flow_jacobian(p, &x, &u, &v, a.alpha, a.eps_act)
        .map(|j| JacobianJson {
            eigenvalues: j.eigenvalues.iter().map(|c| [c.re, c.im]).collect(),
            predicted: j.predicted.clone(),
            r: j.r,
            fd_discrepancy: j.fd_discrepancy,
            spectrum_error: j.spectrum_error,
            warnings: j.warnings.clone(),
        })
        .map_err(|e| e.to_string());
    let value_function = value_function_diag(p, &x, a.alpha, &mut solver)
        .map(|w| ValueJson {
            w: w.w,
            grad_w: vec_of(&w.grad_w),
            rho_q: alpha_lower_bound(p, &x, &w.u, &w.v).ok(),
        })
        .map_err(|e| e.to_string());

    let report = AnalyzeReport {
        problem: p.name().to_string(),
        x: vec_of(&x),
        alpha: a.alpha,
        velocity: proj.as_ref().map(|e| vec_of(&e.xi)),
        speed: proj.as_ref().map(|e| e.speed),
        dual_multipliers: dual,
        feedback_multipliers: feedback,
        multipliers_used: if given { "given".into() } else { "dual".into() },
        kkt: KktJson {
            stationarity: kkt.stationarity,
            primal_infeasibility: kkt.primal_infeasibility,
            dual_infeasibility: kkt.dual_infeasibility,
            complementarity: kkt.complementarity,
            u: vec_of(&kkt.u),
            v: vec_of(&kkt.v),
            tol: kkt.tol,
            is_kkt: kkt.is_kkt,
        },
        cq: CqJson {
            active: cq.active,
            violated: cq.violated,
            licq: cq.licq,
            rank: cq.rank,
            rows: cq.rows,
            sigma_min: finite(cq.sigma_min),
            mfcq: cq.mfcq,
            mfcq_margin: cq.mfcq_margin,
            emfcq: cq.emfcq,
            emfcq_margin: cq.emfcq_margin,
            jh_full_rank: cq.jh_full_rank,
        },
        jacobian_error: jacobian.as_ref().err().cloned(),
        jacobian: jacobian.ok(),
        value_function_error: value_function.as_ref().err().cloned(),
        value_function: value_function.ok(),
    };
    emit(&to_json(&report), a.out.as_deref())?;
    Ok(report)
}

/// One row of the α sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRow {
    pub alpha: f64,
    pub point: usize,
    pub x: DVector<f64>,
    /// `‖𝒢_α(x) − Π_T(−∇f(x))‖`
    pub error: f64,
}

/// One row of the stepsize sweep; `h_star` is NaN when no grid step is stable.
#[derive(Clone, Debug, PartialEq)]
pub struct StepsizeRow {
    pub alpha: f64,
    pub h_star: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepResult {
    Alpha(Vec<AlphaRow>),
    Stepsize(Vec<StepsizeRow>),
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self {
            SweepResult::Alpha(rows) => {
                let n = rows.first().map_or(0, |r| r.x.len());
                s.push_str("alpha,point");
                for i in 1..=n {
                    s.push_str(&format!(",x_{i}"));
                }
                s.push_str(",error\n");
                for r in rows {
                    s.push_str(&format!("{},{}", fmt_num(r.alpha), r.point));
                    for v in r.x.iter() {
                        s.push_str(&format!(",{}", fmt_num(*v)));
                    }
                    s.push_str(&format!(",{}\n", fmt_num(r.error)));
                }
            }
            SweepResult::Stepsize(rows) => {
                s.push_str("alpha,h_star,h_star_alpha\n");
                for r in rows {
                    s.push_str(&format!("{},{},{}\n", fmt_num(r.alpha), fmt_num(r.h_star), fmt_num(r.h_star * r.alpha)));
                }
            }
        }
        s
    }
}

fn flow_err(e: FlowError) -> CliError {
    if e.is_undefined_point() {
        CliError::FlowUndefined(e.to_string())
    } else {
        CliError::usage(e.to_string())
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<SweepResult> {
    let lp = load_problem(&a.problem)?;
    report_warnings(&lp);
    let p = &lp.problem;
    let grid = parse_grid(&a.grid)?;
    let pool = thread_pool()?;
    let result = match a.sweep {
        SweepKind::Alpha => {
            let points: Vec<DVector<f64>> = match &a.points {
                Some(s) => s.split(';').map(|t| parse_point(t, p.n(), "point")).collect::<Result<_>>()?,
                None => lp.known_kkt.iter().map(|k| k.x.clone()).collect(),
            };
            if points.is_empty() {
                return Err(CliError::usage("no sweep points; pass --points"));
            }
            let targets = points
                .iter()
                .map(|x| projected_gradient_field(p, x, a.eps_act, &mut QpSolverF64::default()).map(|e| e.xi))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(flow_err)?;
            let per_alpha: Vec<Result<Vec<AlphaRow>>> = pool.install(|| {
                grid.par_iter()
                    .map(|&alpha| {
                        let mut solver = QpSolverF64::default();
                        points
                            .iter()
                            .zip(&targets)
                            .enumerate()
                            .map(|(i, (x, target))| {
                                let ev = safe_gradient_field(p, x, alpha, Construction::Projection, &mut solver)
                                    .map_err(flow_err)?;
                                Ok(AlphaRow { alpha, point: i, x: x.clone(), error: (&ev.xi - target).norm() })
                            })
                            .collect()
                    })
                    .collect()
            });
            SweepResult::Alpha(per_alpha.into_iter().collect::<Result<Vec<_>>>()?.concat())
        }
        SweepKind::Stepsize => {
            let x0 = initial_point(&lp, a.x0.as_deref())?;
            if !(a.h_max > 0.0 && a.ratio > 0.0 && a.ratio < 1.0 && a.count > 0) {
                return Err(CliError::usage("need h-max > 0, 0 < ratio < 1, count > 0"));
            }
            let hs = geometric_grid(a.h_max, a.ratio, a.count);
            let opts = StabilityOptions {
                horizon: a.horizon,
                min_steps: a.min_steps,
                kkt_points: lp.known_kkt.iter().map(|k| k.x.clone()).collect(),
                ..Default::default()
            };
            let rows: Vec<Result<StepsizeRow>> = pool.install(|| {
                grid.par_iter()
                    .map(|&alpha| match max_stable_stepsize(p, &x0, alpha, &hs, &opts) {
                        Ok(h) => Ok(StepsizeRow { alpha, h_star: h }),
                        Err(sgflow::integrate::IntegrateError::NoStableStep) => {
                            eprintln!("warning: no stable stepsize for alpha = {alpha}");
                            Ok(StepsizeRow { alpha, h_star: f64::NAN })
                        }
                        Err(sgflow::integrate::IntegrateError::Flow(e)) => Err(flow_err(e)),
                        Err(e) => Err(CliError::usage(e.to_string())),
                    })
                    .collect()
            });
            SweepResult::Stepsize(rows.into_iter().collect::<Result<_>>()?)
        }
    };
    emit(&result.to_csv(), a.out.as_deref())?;
    Ok(result)
}
