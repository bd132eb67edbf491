use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SurvError {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("table has too few rows ({0})")]
    EmptyTable(usize),

    #[error("incompatible schema: {0}")]
    IncompatibleSchema(String),

    #[error("subject {index} has non-positive time {time}")]
    NonPositiveTime { index: usize, time: f64 },

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("no events observed")]
    NoEvents,

    #[error("degenerate split: {0}")]
    DegenerateSplit(&'static str),

    #[error("singular Hessian in Newton step")]
    SingularHessian,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("fewer than 2 distinct cut points for the time grid")]
    TooFewDistinctTimes,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("loss diverged at epoch {epoch}: {detail}")]
    DivergedLoss { epoch: usize, detail: String },

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("predicted cumulative hazard sums to zero")]
    ZeroHazardSum,

    #[error("invalid fold count k={0}")]
    InvalidK(usize),

    #[error("every grid point failed on at least one inner fold")]
    AllFitsFailed,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SurvError>;
