use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("input format: {0}")]
    InputFormat(String),

    #[error("no tail vector vanishing on the first {n} coordinates after scanning {scanned} basis vectors")]
    NoTailVector { n: u64, scanned: usize },

    #[error("basis prefix of length {prefix} is linearly dependent (combination vanishes identically)")]
    DependentBasis { prefix: usize },

    #[error("rank decision on basis prefix {prefix} left a residual of {residual:e} on the constrained rows")]
    IllConditioned { prefix: usize, residual: f64 },

    #[error("basis vector {index} does not fit in the 64-bit index space")]
    IndexOverflow { index: usize },

    #[error("support budget of {budget} stored entries exhausted ({used} needed)")]
    BudgetExhausted { budget: usize, used: usize },

    #[error("stage {k}: {reason}")]
    DegenerateStage { k: usize, reason: String },

    #[error("stage {k} violates {family}: {detail}")]
    StageCondition {
        k: usize,
        family: &'static str,
        detail: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
