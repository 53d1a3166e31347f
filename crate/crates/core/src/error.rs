use thiserror::Error;

use crate::trace::SolveTrace;

pub type Result<T, E = FogError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FogError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Load at a node reached or exceeded its service rate.
    #[error("unstable queue at node {node}: load {load} >= service rate {mu}")]
    Unstable { node: usize, load: f64, mu: f64 },

    #[error("allocation entry ({row}, {col}) is nonzero but cooperation is not permitted")]
    MaskViolation { row: usize, col: usize },

    #[error("closed-form branch {branch} is undefined: {reason}")]
    UndefinedBranch { branch: u8, reason: String },

    #[error("{solver} did not converge within {iters} iterations")]
    NonConvergence {
        solver: &'static str,
        iters: usize,
        trace: Box<SolveTrace>,
        /// Last iterate, when one exists.
        last: Option<Box<crate::model::Allocation>>,
    },

    #[error("subproblem at node {node} did not converge: {reason}")]
    Subproblem { node: usize, reason: String },

    #[error("transport failure: {reason}")]
    Transport {
        reason: String,
        partial: Box<SolveTrace>,
    },

    #[error("unknown solver {0:?}")]
    UnknownSolver(String),

    #[error("scenario file {path}: {reason}")]
    Scenario { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FogError {
    pub fn trace(&self) -> Option<&SolveTrace> {
        match self {
            FogError::NonConvergence { trace, .. } => Some(trace),
            FogError::Transport { partial, .. } => Some(partial),
            _ => None,
        }
    }
}
