use thiserror::Error;

/// Errors raised by the fitting, calibration and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate column {0}: zero empirical second moment")]
    DegenerateColumn(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("penalty too large for closed form at coordinate {coordinate}: lambda*gamma = {scaled} >= n*sqrt(E_n x_j^2) = {limit}")]
    PenaltyTooLarge {
        coordinate: usize,
        scaled: f64,
        limit: f64,
    },

    #[error("numerical blow-up: non-finite objective at sweep {sweep}")]
    NonFiniteObjective { sweep: usize },

    #[error("post-OLS overdetermined support: {support} columns with only {n} observations")]
    OverdeterminedSupport { support: usize, n: usize },

    #[error("degenerate noise-scale estimate: {0}")]
    DegenerateScale(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("oracle-inequality bound violated: observed {observed} > bound {bound}")]
    BoundViolated { observed: f64, bound: f64 },

    #[error("data error at row {row}, column {col}: {msg}")]
    Data { row: usize, col: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
