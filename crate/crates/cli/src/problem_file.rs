//! Degree-2 problem files: quadratic objective, affine or quadratic
//! constraints. See `docs/problem-format.md` for the schema.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sgflow::corpus::{self, KktKind, KktPoint};
use sgflow::linalg::symmetric_eigenvalues;
use sgflow::qp::{Polyhedron, QpSolver, QpStatus};
use sgflow::ProblemF64;

use crate::error::{CliError, Result};

/// Asymmetry above which a warning is emitted on load.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub objective: Objective,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    /// Default initial condition.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

/// `½xᵀHx + cᵀx + d`
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    #[serde(rename = "H", default)]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// `≤ 0`
    Le,
    /// `= 0`
    Eq,
}

/// `½xᵀSx + aᵀx − b` compared with zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub kind: Kind,
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: f64,
    #[serde(rename = "S", default)]
    pub s: Option<Vec<Vec<f64>>>,
}

/// A problem ready to run, from either the corpus or a file.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: ProblemF64,
    pub known_kkt: Vec<KktPoint<f64>>,
    pub default_x0: Option<DVector<f64>>,
    pub convex: bool,
    pub polyhedral: bool,
    /// Human diagnostics produced while loading (e.g. symmetrization).
    pub warnings: Vec<String>,
}

impl LoadedProblem {
    pub fn distance_to_kkt(&self, x: &DVector<f64>) -> Option<f64> {
        self.known_kkt.iter().map(|k| (x - &k.x).norm()).reduce(f64::min)
    }

    pub fn primary_kkt(&self) -> Option<&KktPoint<f64>> {
        self.known_kkt.iter().find(|k| k.kind == KktKind::Min).or(self.known_kkt.first())
    }
}

#[derive(Clone)]
struct Quadratic {
    s: Option<DMatrix<f64>>,
    a: DVector<f64>,
    b: f64,
}

impl Quadratic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let quad = self.s.as_ref().map_or(0.0, |s| 0.5 * x.dot(&(s * x)));
        quad + self.a.dot(x) - self.b
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.s {
            Some(s) => s * x + &self.a,
            None => self.a.clone(),
        }
    }

    fn hessian(&self, n: usize) -> DMatrix<f64> {
        self.s.clone().unwrap_or_else(|| DMatrix::zeros(n, n))
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str, warnings: &mut Vec<String>) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::usage(format!("{what} must be {n}×{n}")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL {
        warnings.push(format!("{what} is not symmetric (max asymmetry {asym:e}); using (M + Mᵀ)/2"));
    }
    Ok((&m + m.transpose()) * 0.5)
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(CliError::usage(format!("{what} must have {n} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || symmetric_eigenvalues(m)[0] >= -1e-12 * (1.0 + m.amax())
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid problem file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn build(&self) -> Result<LoadedProblem> {
        let n = self.n;
        if n == 0 {
            return Err(CliError::usage("n must be at least 1"));
        }
        let mut warnings = Vec::new();
        let h = match &self.objective.h {
            Some(rows) => matrix(rows, n, "objective H", &mut warnings)?,
            None => DMatrix::zeros(n, n),
        };
        let c = match &self.objective.c {
            Some(c) => vector(c, n, "objective c")?,
            None => DVector::zeros(n),
        };
        let d = self.objective.d;
        let mut ineq = Vec::new();
        let mut eq = Vec::new();
        for (i, con) in self.constraints.iter().enumerate() {
            let what = format!("constraint {i}");
            let s = match &con.s {
                Some(rows) => Some(matrix(rows, n, &format!("{what} S"), &mut warnings)?).filter(|s| s.amax() > 0.0),
                None => None,
            };
            let q = Quadratic { s, a: vector(&con.a, n, &format!("{what} a"))?, b: con.b };
            match con.kind {
                Kind::Le => ineq.push(q),
                Kind::Eq => eq.push(q),
            }
        }
        let polyhedral = ineq.iter().chain(&eq).all(|q| q.s.is_none());
        let convex = is_psd(&h) && eq.iter().all(|q| q.s.is_none()) && ineq.iter().all(|q| q.s.as_ref().is_none_or(is_psd));
        let default_x0 = self.x0.as_ref().map(|x| vector(x, n, "x0")).transpose()?;

        let (hf, hg, cf, cg) = (h.clone(), h.clone(), c.clone(), c.clone());
        let mut b = ProblemF64::builder(self.name.clone().unwrap_or_else(|| "problem-file".into()), n)
            .objective(move |x: &DVector<f64>| 0.5 * x.dot(&(&hf * x)) + cf.dot(x) + d, move |x: &DVector<f64>| &hg * x + &cg)
            .objective_hessian(move |_: &DVector<f64>| h.clone());
        if !ineq.is_empty() {
            let (q1, q2, q3) = (ineq.clone(), ineq.clone(), ineq.clone());
            let m = ineq.len();
            b = b
                .inequalities(
                    m,
                    move |x: &DVector<f64>| DVector::from_iterator(m, q1.iter().map(|q| q.value(x))),
                    move |x: &DVector<f64>| stack_gradients(&q2, x),
                )
                .inequality_hessians(move |_: &DVector<f64>, i| q3[i].hessian(n));
        }
        if !eq.is_empty() {
            let (q1, q2, q3) = (eq.clone(), eq.clone(), eq.clone());
            let k = eq.len();
            b = b
                .equalities(
                    k,
                    move |x: &DVector<f64>| DVector::from_iterator(k, q1.iter().map(|q| q.value(x))),
                    move |x: &DVector<f64>| stack_gradients(&q2, x),
                )
                .equality_hessians(move |_: &DVector<f64>, j| q3[j].hessian(n));
        }
        if polyhedral {
            b = b.affine_constraints();
        }
        let problem = b.build();
        let known_kkt = if polyhedral && convex { solve_convex_qp(&problem, &ineq, &eq) } else { Vec::new() };
        Ok(LoadedProblem { problem, known_kkt, default_x0, convex, polyhedral, warnings })
    }
}

fn stack_gradients(qs: &[Quadratic], x: &DVector<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(qs.len(), x.len());
    for (r, q) in qs.iter().enumerate() {
        jac.row_mut(r).copy_from(&q.gradient(x).transpose());
    }
    jac
}

/// KKT point of a convex QP with affine constraints, when the solver
/// certifies one.
fn solve_convex_qp(p: &ProblemF64, ineq: &[Quadratic], eq: &[Quadratic]) -> Vec<KktPoint<f64>> {
    let n = p.n();
    let rows = |qs: &[Quadratic]| {
        let a = DMatrix::from_fn(qs.len(), n, |i, j| qs[i].a[j]);
        let b = DVector::from_iterator(qs.len(), qs.iter().map(|q| q.b));
        (a, b)
    };
    let (a, b) = rows(ineq);
    let (e, e_rhs) = rows(eq);
    let zero = DVector::zeros(n);
    let hess = p.objective_hessian(&zero);
    let c = p.gradient(&zero);
    let mut solver = QpSolver::default();
    match solver.solve(&hess, &c, &Polyhedron::new(a, b, e, e_rhs)) {
        Ok(sol) if sol.status == QpStatus::Optimal => {
            vec![KktPoint { x: sol.xi, u: sol.mult_ineq, v: sol.mult_eq, kind: KktKind::Min }]
        }
        _ => Vec::new(),
    }
}

/// Resolves `--problem`: an existing file path (or anything ending in
/// `.json`) is loaded as a problem file, otherwise the corpus is consulted.
pub fn load_problem(spec: &str) -> Result<LoadedProblem> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        return ProblemFile::load(path)?.build();
    }
    let e = corpus::get::<f64>(spec).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(LoadedProblem {
        default_x0: Some(e.default_x0.clone()),
        convex: e.convex,
        polyhedral: e.polyhedral,
        known_kkt: e.known_kkt,
        problem: e.problem,
        warnings: Vec::new(),
    })
}
