use thiserror::Error;

/// Errors raised by the identification, simulation and exposure routines.
#[derive(Debug, Error)]
pub enum RrcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Every singular value is at or below the threshold, so the data cannot
    /// be told apart from noise at this `delta`.
    #[error("numerical rank is zero at delta = {delta:e}")]
    RankZero { delta: f64 },

    #[error("singular value decomposition failed: {0}")]
    Decomposition(String),

    #[error("time index {t} out of range [{lo}, {hi}]")]
    OutOfRange { t: usize, lo: usize, hi: usize },

    #[error("feature dimension {requested} exceeds the budget of {budget} entries")]
    FeatureBudget { requested: String, budget: usize },

    #[error("compression grouping is degenerate at column {column}; grouping eps is too large for the drawn sample")]
    GroupingDegenerate { column: usize },

    #[error("forecast diverged at step {step} (|value| = {value:e} exceeds guard {guard:e})")]
    NumericBlowup { step: usize, value: f64, guard: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("observed channel {channel} is identically zero")]
    DegenerateChannel { channel: usize },

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("unsupported model schema version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RrcError> = std::result::Result<T, E>;

impl From<csv::Error> for RrcError {
    fn from(err: csv::Error) -> Self {
        RrcError::Csv(err.to_string())
    }
}

impl From<serde_json::Error> for RrcError {
    fn from(err: serde_json::Error) -> Self {
        RrcError::Schema(err.to_string())
    }
}
