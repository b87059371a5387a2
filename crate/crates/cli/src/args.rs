use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sgflow", version, about = "Safe gradient flow experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one flow and write its trajectory.
    Flow(FlowArgs),
    /// Run several flows from the same start and tabulate them.
    Compare(CompareArgs),
    /// KKT, constraint qualification, Jacobian and value-function report at a point.
    Analyze(AnalyzeArgs),
    /// Sweep α: projected-gradient error, or largest stable Euler step.
    Sweep(SweepArgs),
}

/// Parameters shared by every flow.
#[derive(Clone, Debug, Args)]
pub struct FlowParams {
    /// Safe gradient gain α.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Log-barrier weight μ.
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    /// ℓ²-penalty parameter ε (penalty weight 1/ε).
    #[arg(long = "eps-pen", default_value_t = 10.0)]
    pub eps_pen: f64,
    /// Step η of the globally projected flow.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Activity threshold of the projected gradient flow.
    #[arg(long = "eps-act", default_value_t = 1e-8)]
    pub eps_act: f64,
    /// Inner construction of the safe gradient flow.
    #[arg(long, value_enum, default_value_t = ConstructionArg::Projection)]
    pub construction: ConstructionArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstructionArg {
    Projection,
    Feedback,
    Dual,
}

/// Integration settings.
#[derive(Clone, Debug, Args)]
pub struct StepperArgs {
    /// `euler:H`, `rk4:H`, `adaptive`, `adaptive:RTOL` or `adaptive:RTOL,ATOL`.
    #[arg(long, default_value = "adaptive")]
    pub stepper: String,
    /// Horizon T.
    #[arg(long = "T", default_value_t = 50.0)]
    pub horizon: f64,
    /// Stop once ‖ẋ‖ falls below this.
    #[arg(long = "eps-conv", default_value_t = 1e-9)]
    pub eps_conv: f64,
    /// Record every k-th accepted step.
    #[arg(long = "record-every", default_value_t = 1)]
    pub record_every: usize,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// Corpus name, `random-qp(seed,n,m)`, or a problem file.
    #[arg(long)]
    pub problem: String,
    /// sgf, projected-gradient, log-barrier, l2-penalty, saddle-point,
    /// globally-projected or equality-closed-form.
    #[arg(long, default_value = "sgf")]
    pub method: String,
    /// Initial point, comma separated. Defaults to the problem's own.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[command(flatten)]
    pub params: FlowParams,
    #[command(flatten)]
    pub stepper: StepperArgs,
    /// Trajectory CSV. Written to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary. Defaults to `<out>.summary.json` when `--out` is given.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub problem: String,
    /// Comma-separated method list.
    #[arg(long, default_value = "sgf,projected-gradient,log-barrier,l2-penalty,saddle-point,globally-projected")]
    pub methods: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[command(flatten)]
    pub params: FlowParams,
    #[command(flatten)]
    pub stepper: StepperArgs,
    /// Directory for per-method CSV files and `comparison.json`.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub problem: String,
    /// Point to analyze, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Inequality multipliers for the KKT and Jacobian reports. Defaults to
    /// the dual-QP multipliers of the flow at `x`.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Equality multipliers (see `--u`).
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    #[arg(long = "eps-act", default_value_t = 1e-8)]
    pub eps_act: f64,
    #[arg(long = "kkt-tol", default_value_t = 1e-6)]
    pub kkt_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Alpha,
    Stepsize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_enum)]
    pub sweep: SweepKind,
    /// Comma-separated α values.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Alpha sweep: feasible points, `x1,x2;y1,y2;…`. Defaults to the problem's
    /// known KKT points.
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    /// Alpha sweep: activity threshold defining the tangent cone.
    #[arg(long = "eps-act", default_value_t = 1e-9)]
    pub eps_act: f64,
    /// Stepsize sweep: initial point. Defaults to the problem's own.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Stepsize sweep: largest stepsize tried.
    #[arg(long = "h-max", default_value_t = 4.0)]
    pub h_max: f64,
    /// Stepsize sweep: ratio between consecutive stepsizes.
    #[arg(long, default_value_t = 0.95)]
    pub ratio: f64,
    /// Stepsize sweep: number of stepsizes.
    #[arg(long, default_value_t = 120)]
    pub count: usize,
    /// Stepsize sweep: horizon of each Euler run.
    #[arg(long = "T", default_value_t = 40.0)]
    pub horizon: f64,
    /// Stepsize sweep: minimum number of Euler steps per run.
    #[arg(long = "min-steps", default_value_t = 2000)]
    pub min_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
