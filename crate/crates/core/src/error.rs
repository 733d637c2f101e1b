use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SurvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SurvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("input has zero data rows")]
    NoDataRows,

    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("last-information date precedes diagnosis date")]
    DatesOutOfOrder,
    #[error("treatment precedes reference date")]
    TreatmentPrecedesReference,
    #[error("unseen category {category:?} in column {column}")]
    UnseenCategory { column: String, category: String },

    #[error("no events in cohort")]
    NoEvents,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("censoring survival is zero at t = {0}")]
    CensoringExhausted(f64),
    #[error("Newton iteration diverged after {iterations} iterations")]
    NewtonDivergence { iterations: usize },
    #[error("event time is zero for subject {0}; AFT loss needs t > 0")]
    ZeroEventTime(usize),
    #[error("loss returned non-finite values at boosting round {round}")]
    LossNonFinite { round: usize },

    #[error("no subjects retained for horizon {0} after excluding early censorings")]
    NoRetainedSubjects(f64),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("no survival function defined for {0}")]
    NoSurvivalFunction(String),
    #[error("exact Shapley enumeration supports at most 12 features, got {0}")]
    TooManyFeatures(usize),
    #[error("every trial failed")]
    AllTrialsFailed,
}
