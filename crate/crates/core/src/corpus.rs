//! Benchmark problems with certified KKT data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::kkt_report;
use crate::model::Problem;
use crate::qp::{Polyhedron, QpSolver, QpStatus};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KktKind {
    Min,
    Max,
    Saddle,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct KktPoint<T: Scalar> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub kind: KktKind,
}

/// Maps an arbitrary point to a nearby feasible one (used by samplers).
pub type Retraction<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

#[derive(Clone)]
pub struct CorpusEntry<T: Scalar> {
    pub problem: Problem<T>,
    pub known_kkt: Vec<KktPoint<T>>,
    pub convex: bool,
    pub polyhedral: bool,
    pub provenance: String,
    /// Suggested initial condition for trajectories.
    pub default_x0: DVector<T>,
    /// Sampling box `[lo, hi]` for random points.
    pub lo: DVector<T>,
    pub hi: DVector<T>,
    retract: Option<Retraction<T>>,
}

impl<T: Scalar> std::fmt::Debug for CorpusEntry<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusEntry")
            .field("problem", &self.problem)
            .field("known_kkt", &self.known_kkt)
            .field("convex", &self.convex)
            .field("polyhedral", &self.polyhedral)
            .finish()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("unknown corpus problem '{0}'")]
    NotFound(String),
    #[error("bad parameters for '{0}': expected random-qp(seed,n,m) with n ≥ 1")]
    BadParameters(String),
    #[error("random QP '{0}' could not be certified")]
    Uncertified(String),
}

const NAMES: [&str; 6] = ["fig3", "remark-multipliers", "sphere", "scalar-bound", "circle-complement", "simplex-projection"];

/// Names of the fixed entries. Random QPs are addressed as
/// `random-qp(seed,n,m)`.
pub fn list() -> Vec<&'static str> {
    NAMES.to_vec()
}

/// Fixed entries plus two random QPs; what the acceptance suite iterates over.
pub fn standard_set<T: Scalar>() -> Vec<CorpusEntry<T>> {
    let mut out: Vec<CorpusEntry<T>> = NAMES.iter().map(|n| get(n).expect("fixed entries exist")).collect();
    out.push(random_qp(1, 3, 4).expect("certified"));
    out.push(random_qp(2, 4, 6).expect("certified"));
    out
}

pub fn get<T: Scalar>(name: &str) -> Result<CorpusEntry<T>, CorpusError> {
    match name {
        "fig3" => Ok(fig3()),
        "remark-multipliers" => Ok(remark_multipliers()),
        "sphere" => Ok(sphere()),
        "scalar-bound" => Ok(scalar_bound()),
        "circle-complement" => Ok(circle_complement()),
        "simplex-projection" => Ok(simplex_projection()),
        _ => {
            if let Some(args) = name.strip_prefix("random-qp(").and_then(|r| r.strip_suffix(')')) {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                let parse = || -> Option<(u64, usize, usize)> {
                    if parts.len() != 3 {
                        return None;
                    }
                    Some((parts[0].parse().ok()?, parts[1].parse().ok()?, parts[2].parse().ok()?))
                };
                match parse() {
                    Some((seed, n, m)) if n >= 1 => random_qp(seed, n, m),
                    _ => Err(CorpusError::BadParameters(name.to_string())),
                }
            } else {
                Err(CorpusError::NotFound(name.to_string()))
            }
        }
    }
}

fn l<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

fn vecf<T: Scalar>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)))
}

fn matf<T: Scalar>(r: usize, c: usize, v: &[f64]) -> DMatrix<T> {
    DMatrix::from_row_iterator(r, c, v.iter().map(|x| T::lit(*x)))
}

fn kkt<T: Scalar>(x: &[f64], u: &[f64], v: &[f64], kind: KktKind) -> KktPoint<T> {
    KktPoint { x: vecf(x), u: vecf(u), v: vecf(v), kind }
}

/// `min 0.25‖x‖² − 0.5x₁ + 0.25x₂  s.t.  0 ≤ x₁ ≤ x₂`.
pub fn fig3<T: Scalar>() -> CorpusEntry<T> {
    let problem = Problem::builder("fig3", 2)
        .objective(
            |x: &DVector<T>| l::<T>(0.25) * x.norm_squared() - l::<T>(0.5) * x[0] + l::<T>(0.25) * x[1],
            |x: &DVector<T>| DVector::from_vec(vec![l::<T>(0.5) * x[0] - l(0.5), l::<T>(0.5) * x[1] + l(0.25)]),
        )
        .inequalities(
            2,
            |x: &DVector<T>| DVector::from_vec(vec![-x[0], x[0] - x[1]]),
            |_: &DVector<T>| matf(2, 2, &[-1.0, 0.0, 1.0, -1.0]),
        )
        .objective_hessian(|_: &DVector<T>| DMatrix::identity(2, 2) * l::<T>(0.5))
        .affine_constraints()
        .build();
    CorpusEntry {
        problem,
        known_kkt: vec![kkt(&[0.25, 0.25], &[0.0, 0.375], &[], KktKind::Min)],
        convex: true,
        polyhedral: true,
        provenance: "comparison problem; initial condition (−0.75, 0.1) is approximate".into(),
        default_x0: vecf(&[-0.75, 0.1]),
        lo: vecf(&[-1.0, -1.0]),
        hi: vecf(&[1.0, 1.0]),
        retract: None,
    }
}

/// `min ‖x‖²  s.t.  x₂ ≤ 1, −x₂ ≤ 1`; the multiplier set at 0 is `{(0, 0)}`.
pub fn remark_multipliers<T: Scalar>() -> CorpusEntry<T> {
    let problem = Problem::builder("remark-multipliers", 2)
        .objective(|x: &DVector<T>| x.norm_squared(), |x: &DVector<T>| x * l::<T>(2.0))
        .inequalities(
            2,
            |x: &DVector<T>| DVector::from_vec(vec![x[1] - T::one(), -x[1] - T::one()]),
            |_: &DVector<T>| matf(2, 2, &[0.0, 1.0, 0.0, -1.0]),
        )
        .objective_hessian(|_: &DVector<T>| DMatrix::identity(2, 2) * l::<T>(2.0))
        .affine_constraints()
        .build();
    CorpusEntry {
        problem,
        known_kkt: vec![kkt(&[0.0, 0.0], &[0.0, 0.0], &[], KktKind::Min)],
        convex: true,
        polyhedral: true,
        provenance: "multiplier example: dual and feedback QPs may return different multipliers".into(),
        default_x0: vecf(&[0.5, 2.0]),
        lo: vecf(&[-2.0, -2.0]),
        hi: vecf(&[2.0, 2.0]),
        retract: None,
    }
}

/// `min ½xᵀdiag(1,2,3)x  s.t.  ‖x‖² = 1`.
pub fn sphere<T: Scalar>() -> CorpusEntry<T> {
    let d = [1.0, 2.0, 3.0];
    let problem = Problem::builder("sphere", 3)
        .objective(
            move |x: &DVector<T>| (0..3).fold(T::zero(), |a, i| a + l::<T>(0.5 * d[i]) * x[i] * x[i]),
            move |x: &DVector<T>| DVector::from_fn(3, |i, _| l::<T>(d[i]) * x[i]),
        )
        .equalities(
            1,
            |x: &DVector<T>| DVector::from_element(1, x.norm_squared() - T::one()),
            |x: &DVector<T>| DMatrix::from_row_slice(1, x.len(), (x * l::<T>(2.0)).as_slice()),
        )
        .objective_hessian(move |_: &DVector<T>| DMatrix::from_diagonal(&vecf(&d)))
        .equality_hessians(|_: &DVector<T>, _| DMatrix::identity(3, 3) * l::<T>(2.0))
        .build();
    let mut known = Vec::new();
    for (i, kind) in [KktKind::Min, KktKind::Saddle, KktKind::Max].into_iter().enumerate() {
        for s in [1.0, -1.0] {
            let mut x = [0.0; 3];
            x[i] = s;
            known.push(kkt(&x, &[], &[-0.5 * d[i]], kind));
        }
    }
    CorpusEntry {
        problem,
        known_kkt: known,
        convex: false,
        polyhedral: false,
        provenance: "equality-only problem with curved constraint".into(),
        default_x0: vecf(&[0.6, 0.6, 0.6]),
        lo: vecf(&[-1.5, -1.5, -1.5]),
        hi: vecf(&[1.5, 1.5, 1.5]),
        retract: Some(Arc::new(|x: &DVector<T>| {
            let nrm = x.norm();
            if nrm > T::zero() {
                x / nrm
            } else {
                let mut e = DVector::zeros(x.len());
                e[0] = T::one();
                e
            }
        })),
    }
}

/// `min ½(x − 1)²  s.t.  x ≤ 0`; strictly complementary at `x* = 0`, `u* = 1`.
pub fn scalar_bound<T: Scalar>() -> CorpusEntry<T> {
    let problem = Problem::builder("scalar-bound", 1)
        .objective(|x: &DVector<T>| l::<T>(0.5) * (x[0] - T::one()).powi(2), |x: &DVector<T>| x.add_scalar(-T::one()))
        .inequalities(1, |x: &DVector<T>| x.clone(), |_: &DVector<T>| DMatrix::identity(1, 1))
        .objective_hessian(|_: &DVector<T>| DMatrix::identity(1, 1))
        .affine_constraints()
        .build();
    CorpusEntry {
        problem,
        known_kkt: vec![kkt(&[0.0], &[1.0], &[], KktKind::Min)],
        convex: true,
        polyhedral: true,
        provenance: "one-dimensional strict complementarity case".into(),
        default_x0: vecf(&[-1.0]),
        lo: vecf(&[-2.0]),
        hi: vecf(&[2.0]),
        retract: None,
    }
}

/// `min ½((x₁ − 0.2)² + x₂²)  s.t.  1 − ‖x‖² ≤ 0` (outside the unit disc).
pub fn circle_complement<T: Scalar>() -> CorpusEntry<T> {
    let problem = Problem::builder("circle-complement", 2)
        .objective(
            |x: &DVector<T>| l::<T>(0.5) * ((x[0] - l(0.2)).powi(2) + x[1] * x[1]),
            |x: &DVector<T>| DVector::from_vec(vec![x[0] - l(0.2), x[1]]),
        )
        .inequalities(
            1,
            |x: &DVector<T>| DVector::from_element(1, T::one() - x.norm_squared()),
            |x: &DVector<T>| DMatrix::from_row_slice(1, x.len(), (x * l::<T>(-2.0)).as_slice()),
        )
        .objective_hessian(|_: &DVector<T>| DMatrix::identity(2, 2))
        .inequality_hessians(|_: &DVector<T>, _| DMatrix::identity(2, 2) * l::<T>(-2.0))
        .build();
    CorpusEntry {
        problem,
        known_kkt: vec![
            kkt(&[1.0, 0.0], &[0.4], &[], KktKind::Min),
            kkt(&[-1.0, 0.0], &[0.6], &[], KktKind::Saddle),
        ],
        convex: false,
        polyhedral: false,
        provenance: "nonconvex feasible set".into(),
        default_x0: vecf(&[0.3, 1.5]),
        lo: vecf(&[-2.0, -2.0]),
        hi: vecf(&[2.0, 2.0]),
        retract: None,
    }
}

/// `min ½‖x − (1, 2.5, 0)‖²  s.t.  x ≥ 0, Σx = 1`.
pub fn simplex_projection<T: Scalar>() -> CorpusEntry<T> {
    let c = [1.0, 2.5, 0.0];
    let problem = Problem::builder("simplex-projection", 3)
        .objective(
            move |x: &DVector<T>| (x - vecf::<T>(&c)).norm_squared() * l::<T>(0.5),
            move |x: &DVector<T>| x - vecf::<T>(&c),
        )
        .inequalities(3, |x: &DVector<T>| -x, |_: &DVector<T>| -DMatrix::identity(3, 3))
        .equalities(
            1,
            |x: &DVector<T>| DVector::from_element(1, x.sum() - T::one()),
            |_: &DVector<T>| DMatrix::from_element(1, 3, T::one()),
        )
        .objective_hessian(|_: &DVector<T>| DMatrix::identity(3, 3))
        .affine_constraints()
        .build();
    CorpusEntry {
        problem,
        known_kkt: vec![kkt(&[0.0, 1.0, 0.0], &[0.5, 0.0, 1.5], &[1.5], KktKind::Min)],
        convex: true,
        polyhedral: true,
        provenance: "projection onto the probability simplex".into(),
        default_x0: vecf(&[0.2, 0.3, 0.5]),
        lo: vecf(&[-0.5, -0.5, -0.5]),
        hi: vecf(&[1.5, 1.5, 1.5]),
        retract: Some(Arc::new(|x: &DVector<T>| {
            let a = x.abs();
            let s = a.sum();
            if s > T::zero() {
                a / s
            } else {
                DVector::from_element(x.len(), T::one() / T::count(x.len()))
            }
        })),
    }
}

/// Convex QP `min ½xᵀHx + cᵀx  s.t.  Ax ≤ b` with `cond(H) ≤ 1e3` and a
/// strictly feasible point built in. The KKT point is computed with the QP
/// solver and certified at `τ = 1e−9`.
pub fn random_qp<T: Scalar>(seed: u64, n: usize, m: usize) -> Result<CorpusEntry<T>, CorpusError> {
    let name = format!("random-qp({seed},{n},{m})");
    if n == 0 {
        return Err(CorpusError::BadParameters(name));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unif = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let raw = DMatrix::<f64>::from_fn(n, n, |_, _| unif(-1.0, 1.0));
    let q = raw.qr().q();
    // Eigenvalues log-uniform in [0.5, 500].
    let eig = DVector::<f64>::from_fn(n, |_, _| 0.5 * 1e3f64.powf(unif(0.0, 1.0)));
    let h64 = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    let h64 = (&h64 + h64.transpose()) * 0.5;
    let c64 = DVector::<f64>::from_fn(n, |_, _| unif(-3.0, 3.0));
    let interior = DVector::<f64>::from_fn(n, |_, _| unif(-0.5, 0.5));
    let a64 = DMatrix::<f64>::from_fn(m, n, |_, _| unif(-1.0, 1.0));
    let b64 = &a64 * &interior + DVector::<f64>::from_fn(m, |_, _| unif(0.1, 1.0));

    let cast_m = |m: &DMatrix<f64>| m.map(|v| T::lit(v));
    let cast_v = |v: &DVector<f64>| v.map(|x| T::lit(x));
    let (h, c, a, b) = (cast_m(&h64), cast_v(&c64), cast_m(&a64), cast_v(&b64));

    let mut solver = QpSolver::<T>::default();
    let sol = solver
        .solve(&h, &c, &Polyhedron::inequalities(a.clone(), b.clone()))
        .map_err(|_| CorpusError::Uncertified(name.clone()))?;
    if sol.status != QpStatus::Optimal {
        return Err(CorpusError::Uncertified(name));
    }
    let (hf, cf, hg) = (h.clone(), c.clone(), h.clone());
    let (ag, bg, aj) = (a.clone(), b.clone(), a.clone());
    let problem = Problem::builder(name.clone(), n)
        .objective(
            move |x: &DVector<T>| x.dot(&(&hf * x)) * l::<T>(0.5) + cf.dot(x),
            move |x: &DVector<T>| &hg * x + &c,
        )
        .inequalities(m, move |x: &DVector<T>| &ag * x - &bg, move |_: &DVector<T>| aj.clone())
        .objective_hessian(move |_: &DVector<T>| h.clone())
        .affine_constraints()
        .build();
    let tol = T::tol(1e-9, 1e4);
    let report = kkt_report(&problem, &sol.xi, &sol.mult_ineq, &DVector::zeros(0), tol)
        .map_err(|_| CorpusError::Uncertified(name.clone()))?;
    if !report.is_kkt {
        return Err(CorpusError::Uncertified(name));
    }
    let x0 = cast_v(&interior);
    Ok(CorpusEntry {
        problem,
        known_kkt: vec![KktPoint { x: sol.xi, u: sol.mult_ineq, v: DVector::zeros(0), kind: KktKind::Min }],
        convex: true,
        polyhedral: true,
        provenance: format!("random convex QP, seed {seed}"),
        default_x0: x0,
        lo: DVector::from_element(n, l(-2.0)),
        hi: DVector::from_element(n, l(2.0)),
        retract: None,
    })
}

impl<T: Scalar> CorpusEntry<T> {
    pub fn name(&self) -> &str {
        self.problem.name()
    }

    /// Uniform sample from the box `[lo, hi]`.
    pub fn sample_box<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        DVector::from_fn(self.lo.len(), |i, _| {
            let (lo, hi) = (self.lo[i].as_f64(), self.hi[i].as_f64());
            T::lit(rng.random_range(lo..hi))
        })
    }

    /// Feasible sample (constraint violation ≤ `1e−12`), by retraction and
    /// rejection. `None` after `tries` failed attempts.
    pub fn sample_feasible<R: Rng>(&self, rng: &mut R, tries: usize) -> Option<DVector<T>> {
        for _ in 0..tries {
            let mut x = self.sample_box(rng);
            if let Some(r) = &self.retract {
                x = r(&x);
            }
            if let Ok(pd) = self.problem.evaluate(&x) {
                if pd.infeasibility() <= T::lit(1e-12) {
                    return Some(x);
                }
            }
        }
        None
    }

    /// Sample with constraint violation at least `min_violation`.
    pub fn sample_infeasible<R: Rng>(&self, rng: &mut R, min_violation: T, tries: usize) -> Option<DVector<T>> {
        for _ in 0..tries {
            let x = self.sample_box(rng);
            if let Ok(pd) = self.problem.evaluate(&x) {
                if pd.infeasibility() >= min_violation {
                    return Some(x);
                }
            }
        }
        None
    }

    /// Distance from `x` to the nearest known KKT point.
    pub fn distance_to_kkt(&self, x: &DVector<T>) -> T {
        self.known_kkt.iter().map(|k| (x - &k.x).norm()).fold(T::infinity(), |a, b| a.min(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::kkt_report;

    #[test]
    fn every_known_kkt_point_certifies() {
        for e in standard_set::<f64>() {
            for k in &e.known_kkt {
                let r = kkt_report(&e.problem, &k.x, &k.u, &k.v, 1e-9).unwrap();
                assert!(r.is_kkt, "{} at {}: {r:?}", e.name(), k.x);
            }
        }
    }

    #[test]
    fn lookup() {
        assert!(matches!(get::<f64>("nope"), Err(CorpusError::NotFound(_))));
        assert!(matches!(get::<f64>("random-qp(1,0,3)"), Err(CorpusError::BadParameters(_))));
        assert!(matches!(get::<f64>("random-qp(1,x,3)"), Err(CorpusError::BadParameters(_))));
        let e = get::<f64>("random-qp(5, 3, 2)").unwrap();
        assert_eq!((e.problem.n(), e.problem.m()), (3, 2));
        assert_eq!(list().len(), 6);
        let f = get::<f64>("fig3").unwrap();
        assert!(f.convex && f.polyhedral);
        assert_eq!(f.known_kkt[0].u, DVector::from_vec(vec![0.0, 0.375]));
    }

    #[test]
    fn random_qp_is_deterministic_and_feasible() {
        let a = random_qp::<f64>(9, 4, 5).unwrap();
        let b = random_qp::<f64>(9, 4, 5).unwrap();
        assert_eq!(a.known_kkt[0].x, b.known_kkt[0].x);
        let pd = a.problem.evaluate(&a.default_x0).unwrap();
        assert!(pd.max_g() < 0.0);
        let hess = a.problem.objective_hessian(&a.default_x0);
        let eig = crate::linalg::symmetric_eigenvalues(&hess);
        assert!(eig[0] > 0.0 && eig[eig.len() - 1] / eig[0] <= 1e3 + 1e-6);
    }

    #[test]
    fn samplers_respect_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in standard_set::<f64>() {
            let x = e.sample_feasible(&mut rng, 10_000).unwrap_or_else(|| panic!("{}", e.name()));
            assert!(e.problem.evaluate(&x).unwrap().infeasibility() <= 1e-12);
            if let Some(y) = e.sample_infeasible(&mut rng, 1e-3, 10_000) {
                assert!(e.problem.evaluate(&y).unwrap().infeasibility() >= 1e-3);
            }
        }
    }

    #[test]
    fn analytic_hessians_match_finite_differences() {
        let x = DVector::from_vec(vec![0.3, -0.7, 0.4]);
        let e = sphere::<f64>();
        let fd = crate::model::fd_jacobian(|y| e.problem.equality_jacobian(y).row(0).transpose(), &x, 3, 1e-4);
        assert!((fd - e.problem.equality_hessian(&x, 0)).amax() < 1e-6);
    }

    #[test]
    fn f32_corpus_builds() {
        let e = get::<f32>("fig3").unwrap();
        let r = kkt_report(&e.problem, &e.known_kkt[0].x, &e.known_kkt[0].u, &e.known_kkt[0].v, 1e-6).unwrap();
        assert!(r.is_kkt);
    }
}
