use thiserror::Error;

/// Errors raised anywhere in the pricing pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("zero pivot in Gauss-Seidel sweep for field {0}")]
    ZeroPivot(&'static str),

    #[error("exercise boundary left (0, K]: s_f = {s_f} in regime {regime}")]
    BoundaryDivergence { regime: usize, s_f: f64 },

    #[error("time step {step} did not converge within {iterations} outer iterations")]
    NonConvergence { step: usize, iterations: usize },

    #[error("missing time history: {0}")]
    MissingHistory(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// The first violated constraint of a [`RegimeModel`](crate::model::RegimeModel).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("strike must be positive, got {0}")]
    Strike(f64),
    #[error("maturity must be positive, got {0}")]
    Maturity(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("at least one regime is required")]
    NoRegimes,
    #[error("regime data has inconsistent lengths: {0}")]
    Shape(String),
    #[error("volatility of regime {regime} must be positive, got {value}")]
    Volatility { regime: usize, value: f64 },
    #[error("non-finite rate in regime {0}")]
    Rate(usize),
    #[error("negative transition intensity q[{row}][{col}] = {value}")]
    NegativeIntensity { row: usize, col: usize, value: f64 },
    #[error("row {row} of the generator sums to {sum}, not 0")]
    RowSum { row: usize, sum: f64 },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
