use thiserror::Error;

use crate::solver::WeightSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("estimation window too short: t0={t0}, h={h}, p={p} gives {effective} observations, need at least {required}")]
    WindowTooShort {
        t0: usize,
        h: usize,
        p: usize,
        effective: i64,
        required: usize,
    },

    #[error("treated unit index {index} out of range 1..={n_units}")]
    BadTreatedIndex { index: usize, n_units: usize },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid filter spec: {0}")]
    InvalidFilterSpec(String),

    #[error("lag index {index} required for period {period} is out of range")]
    LagOutOfRange { period: i64, index: i64 },

    #[error("horizon {horizon} beyond t0={t0} exceeds the {periods} observed periods")]
    HorizonExceedsPanel {
        t0: usize,
        horizon: usize,
        periods: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate sum-to-one constraint (1'G+1 = {0:e})")]
    DegenerateConstraint(f64),

    #[error("simplex solver hit the iteration cap ({iterations}) before converging")]
    MaxIterations {
        iterations: usize,
        best: Box<WeightSolution>,
    },

    #[error("invalid weight regime: {0}")]
    InvalidRegime(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSimulation(String),

    #[error("{failed} of {total} replications failed (limit 1%)")]
    FailureRateExceeded { failed: usize, total: usize },

    #[error("panel is unbalanced; missing cells: {}", format_cells(.missing))]
    UnbalancedPanel { missing: Vec<(String, i64)> },

    #[error("treated label {0:?} not found in panel")]
    UnknownTreatedLabel(String),

    #[error("period label {0} not found in panel")]
    UnknownPeriodLabel(i64),

    #[error("periods are not contiguous: {0}")]
    NonContiguousPeriods(String),

    #[error("duplicate cell ({unit}, {period})")]
    DuplicateCell { unit: String, period: i64 },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(String, i64)]) -> String {
    cells
        .iter()
        .map(|(u, p)| format!("({u}, {p})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Stable machine-readable code, used in CLI error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::WindowTooShort { .. } => "WINDOW_TOO_SHORT",
            Error::BadTreatedIndex { .. } => "BAD_TREATED_INDEX",
            Error::InvalidPanel(_) => "INVALID_PANEL",
            Error::InvalidFilterSpec(_) => "INVALID_FILTER_SPEC",
            Error::LagOutOfRange { .. } => "LAG_OUT_OF_RANGE",
            Error::HorizonExceedsPanel { .. } => "HORIZON_EXCEEDS_PANEL",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::DegenerateConstraint(_) => "DEGENERATE_CONSTRAINT",
            Error::MaxIterations { .. } => "MAX_ITERATIONS",
            Error::InvalidRegime(_) => "INVALID_REGIME",
            Error::InvalidSimulation(_) => "INVALID_SIMULATION",
            Error::FailureRateExceeded { .. } => "FAILURE_RATE_EXCEEDED",
            Error::UnbalancedPanel { .. } => "UNBALANCED_PANEL",
            Error::UnknownTreatedLabel(_) => "UNKNOWN_TREATED_LABEL",
            Error::UnknownPeriodLabel(_) => "UNKNOWN_PERIOD_LABEL",
            Error::NonContiguousPeriods(_) => "NON_CONTIGUOUS_PERIODS",
            Error::DuplicateCell { .. } => "DUPLICATE_CELL",
            Error::Csv(_) => "MALFORMED_CSV",
            Error::Config(_) => "INVALID_CONFIG",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
