use crate::scenario::ValidationReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation failed: {0}")]
    Validation(ValidationReport),
}

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("hybrid A* found no path after exploring {explored} nodes")]
    SearchFailed { explored: usize },
    #[error("guidance path is empty")]
    EmptyPath,
    #[error("reference speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("time-unit index {k} outside horizon 0..={horizon}")]
    IndexOutOfRange { k: usize, horizon: usize },
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("quadratic cost matrix is not positive semidefinite")]
    NotPsd,
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("interior point did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize, best: Vec<f64> },
}

#[derive(Debug, Error)]
pub enum MiqpError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("budget exhausted after {nodes} nodes without a feasible solution")]
    Timeout { nodes: usize },
    #[error("invalid mixed-integer problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum IstcError {
    #[error("corridor horizon must be at least one time unit")]
    DegenerateHorizon,
    #[error("guidance trajectories disagree on the horizon or vehicle count")]
    HorizonMismatch,
    #[error("start cubes of vehicles {0} and {1} overlap before any optimisation")]
    StartOverlap(u32, u32),
    #[error("corridor problem infeasible; last pruned node blocked by: {}", families.join(", "))]
    Infeasible { families: Vec<String> },
    #[error("corridor solve exhausted its budget after {nodes} nodes without a feasible solution")]
    Timeout { nodes: usize },
    #[error(transparent)]
    Solver(#[from] MiqpError),
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("steering angle {delta} reached the singular limit at step {step}")]
    SingularSteering { step: usize, delta: f64 },
    #[error("non-finite value during rollout at step {step}")]
    Numeric { step: usize },
    #[error("no feasible trajectory: max violation {max_violation:.3e} at step {step}")]
    Infeasible { max_violation: f64, step: usize },
    #[error("invalid trajectory problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectories use different time steps ({0} vs {1})")]
    MismatchedDt(f64, f64),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("validation: {0}")]
    Validation(ValidationReport),
    #[error("guidance: vehicle {vehicle}: {source}")]
    Guidance { vehicle: u32, source: GuidanceError },
    #[error("istc: {0}")]
    Istc(#[from] IstcError),
    #[error("trajectory: vehicle {vehicle}: {source}")]
    Trajectory { vehicle: u32, source: TrajectoryError },
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Validation(_) => "validation",
            PipelineError::Guidance { .. } => "guidance",
            PipelineError::Istc(_) => "istc",
            PipelineError::Trajectory { .. } | PipelineError::Metrics(_) => "trajectory",
            PipelineError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Guidance { .. } => 3,
            PipelineError::Istc(_) => 4,
            PipelineError::Trajectory { .. } | PipelineError::Metrics(_) => 5,
            PipelineError::Io(_) => 6,
        }
    }
}
