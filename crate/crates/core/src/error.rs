use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: n = {n} exceeds t_max = {t_max}")]
    Infeasible { n: usize, t_max: u32 },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("policy has infinite expected completion time: {state}")]
    InfiniteExpectedTime { state: String },

    #[error("episode exceeded step cap {cap} ({completed} episodes completed)")]
    StepCap { cap: u64, completed: u64 },

    #[error("transition requested from absorbing state {{{0}}}")]
    AbsorbingState(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
