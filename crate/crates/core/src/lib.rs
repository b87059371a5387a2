//! Safe gradient flow for constrained optimization.
//!
//! The flow `ẋ = 𝒢_α(x)` projects `−∇f(x)` onto
//! `{ξ : Jg ξ ≤ −αg(x), Jh ξ = −αh(x)}`. Its trajectories keep the feasible
//! set forward invariant, attract infeasible starts exponentially and
//! converge to KKT points. Alongside it the crate provides the baseline flows
//! it is usually compared with, integrators, a dense QP engine and
//! diagnostics (KKT residuals, constraint qualifications, Jacobian spectra,
//! penalty and value functions).
//!
//! Everything is generic over the scalar type ([`Scalar`], implemented for
//! `f64` and `f32`); the aliases below name the common instantiations.

pub mod analysis;
pub mod corpus;
pub mod flows;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod scalar;

pub use analysis::{CqReport, JacobianReport, KktReport};
pub use corpus::CorpusEntry;
pub use flows::{Construction, FlowError, FlowEval, FlowSpec};
pub use integrate::{StepperSpec, TerminalStatus, Trajectory};
pub use model::{PointData, Problem};
pub use qp::{Polyhedron, QpSolution, QpSolver, QpStatus};
pub use scalar::Scalar;

pub type ProblemF64 = Problem<f64>;
pub type ProblemF32 = Problem<f32>;
pub type PointDataF64 = PointData<f64>;
pub type PolyhedronF64 = Polyhedron<f64>;
pub type PolyhedronF32 = Polyhedron<f32>;
pub type QpSolutionF64 = QpSolution<f64>;
pub type QpSolverF64 = QpSolver<f64>;
pub type QpSolverF32 = QpSolver<f32>;
pub type FlowSpecF64 = FlowSpec<f64>;
pub type FlowEvalF64 = FlowEval<f64>;
pub type StepperSpecF64 = StepperSpec<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type TrajectoryF32 = Trajectory<f32>;
pub type KktReportF64 = KktReport<f64>;
pub type CqReportF64 = CqReport<f64>;
pub type JacobianReportF64 = JacobianReport<f64>;
pub type CorpusEntryF64 = CorpusEntry<f64>;
