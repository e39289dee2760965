use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("transition matrix is not primitive")]
    NotPrimitive,

    #[error("Perron iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cylinder word must be nonempty")]
    EmptyWord,

    #[error("memory budget exceeded: about {required} cells required, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },

    #[error("degenerate covariance: cocycle is a coboundary along direction {direction:?}")]
    DegenerateCovariance { direction: Vec<f64>, matrix: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("correlation series is not summable (fitted power exponent {exponent:.3} >= -1); the Green-Kubo sum diverges")]
    NonSummable { exponent: f64 },

    #[error("too few usable points: {0}")]
    TooFewPoints(String),

    #[error("cocycle has nonzero drift {0:?}")]
    NonzeroDrift(Vec<f64>),

    #[error("observable has nonzero fiber mean")]
    NonzeroFiberMean,

    #[error("symbol prefix too short: need {need}, have {have}")]
    ShortPrefix { need: usize, have: usize },

    #[error("{0} out of range")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
