use thiserror::Error;

use crate::sdp::SolverStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model set: {0}")]
    ModelSet(String),

    #[error("invalid group set: {0}")]
    GroupSet(String),

    /// No allowed group containing the high-fidelity model exists for an output.
    #[error("output {output}: no allowed group contains model 1, the estimator cannot be well-posed")]
    NoHighFidelityGroup { output: usize },

    #[error("covariance ({i},{j}) unknown for output {output}")]
    UnknownCovariance { output: usize, i: usize, j: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("need at least 2 pilot samples, got {0}")]
    TooFewSamples(usize),

    #[error("non-finite sample value for model {model}")]
    NonFiniteSample { model: usize },

    #[error("invalid covariance data: {0}")]
    Covariance(String),

    #[error("negative sample count {value} for group {group}")]
    NegativeAllocation { group: usize, value: f64 },

    #[error("allocation length {got} does not match {expected} groups")]
    AllocationLength { expected: usize, got: usize },

    /// e1 is not in the column space of Psi: the estimator is undefined.
    #[error("estimator is ill-posed for output {output}: model 1 is never sampled (residual {residual:e})")]
    IllPosed { output: usize, residual: f64 },

    #[error("sample block for group {group} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        group: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("budget {budget} is below the cheapest well-posed group cost {min_cost} for output {output}")]
    BudgetInfeasible {
        output: usize,
        budget: f64,
        min_cost: f64,
    },

    #[error("invalid MOSAP specification: {0}")]
    Spec(String),

    #[error("SDP solver finished with status {status:?} after {iterations} iterations (gap {gap:e}, primal residual {primal:e}, dual residual {dual:e})")]
    Solver {
        status: SolverStatus,
        iterations: usize,
        gap: f64,
        primal: f64,
        dual: f64,
    },

    #[error("malformed SDP problem: {0}")]
    SdpFormat(String),

    #[error("baseline: {0}")]
    Baseline(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("evaluator failed on group {group}, sample {sample}: {message}")]
    Evaluator {
        group: usize,
        sample: usize,
        message: String,
    },

    #[error("evaluator protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
