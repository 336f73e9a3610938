use thiserror::Error;

use crate::model::StudentParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter became non-finite during training. `last_good` holds the
    /// parameters from the last iteration whose values were all finite.
    #[error("numerical failure at iteration {iter}: {detail}")]
    NumericalFailure {
        iter: usize,
        detail: String,
        last_good: Option<Box<StudentParams>>,
    },

    #[error("rank-deficient system: estimated rank {rank} of {dim} (condition number {condition:e})")]
    RankDeficient {
        rank: usize,
        dim: usize,
        condition: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {{
        // Bound first so NaN-rejecting conditions like `x > 0.0` read plainly.
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::Error::InvalidArgument(format!($($arg)*)));
        }
    }};
}
pub(crate) use ensure;
