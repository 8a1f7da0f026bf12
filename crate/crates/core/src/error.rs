use thiserror::Error;

/// Errors raised by the LP routines.
///
/// Variants fall into two families: bad or degenerate *data* (see
/// [`Error::is_data_error`]) and *numeric* failures such as a Newton fit that
/// does not converge.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("value {value} lies outside the support of the {baseline} baseline")]
    OutOfSupport { value: f64, baseline: String },

    #[error("empty {axis} category {index} ({label})")]
    EmptyCategory {
        axis: &'static str,
        index: usize,
        label: String,
    },

    #[error("ties present in sample; use the general LP moment path instead")]
    TiesPresent,

    #[error("Gini correlation undefined at order {0}")]
    GiniUndefined(usize),

    #[error("odds ratio undefined: table has a zero cell")]
    OddsRatioUndefined,

    #[error("fit did not converge after {iterations} iterations (max residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from the input data rather than from a
    /// numeric routine.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::NonConvergence { .. } | Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
