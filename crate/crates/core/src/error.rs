use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("admissibility violation at slice {slice}, node {node}: wealth factor {factor} on branch {branch}")]
    Admissibility { slice: usize, node: usize, branch: usize, factor: f64 },
    #[error("step size too large: jump mass {mass} per step must stay below 1 (use dt < {max_dt})")]
    StepSize { mass: f64, max_dt: f64 },
    #[error("structure condition fails: drift is not in the range of the covariance (residual {residual:e})")]
    StructureCondition { residual: f64 },
    #[error("objective is unbounded over the feasible set")]
    Unbounded,
    #[error("infinite value at slice {slice}, node {node}: {reason}")]
    InfiniteValue { slice: usize, node: usize, reason: String },
    #[error("not representable: {0}")]
    NotRepresentable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("size budget exceeded: {0}")]
    Budget(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
