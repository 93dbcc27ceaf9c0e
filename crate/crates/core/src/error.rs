use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),
    /// Array shapes that cannot be combined by an operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A caller broke an API contract (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The least-squares design matrix has no unique solution.
    #[error("rank-deficient design matrix ({rows}x{cols})")]
    RankDeficient { rows: usize, cols: usize },
    /// Training or simulation produced a non-finite value.
    #[error("numerical failure at {stage} {index}: {detail}")]
    Numerical {
        stage: &'static str,
        index: usize,
        detail: String,
    },
    /// A metric is not defined for the given truth/prediction sets.
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::Error::Input(alloc::format!($($arg)*))
    };
}
pub(crate) use input_err;
