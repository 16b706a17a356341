use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A theorem hypothesis on the smoothness/noise parameters does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("coefficient grid {rows}x{cols} does not cover required index ({k}, {j})")]
    GridTooSmall {
        rows: usize,
        cols: usize,
        k: usize,
        j: usize,
    },

    #[error("differentiation operator overflow at order {order} (max degree {max_degree})")]
    Overflow { order: usize, max_degree: usize },

    #[error("unknown test function '{0}'")]
    UnknownFunction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
