use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}` must be binary (0/1), found {value} at row {row}")]
    NotBinary { column: String, row: usize, value: f64 },
    #[error("exposure group {0} empty")]
    EmptyExposureGroup(u8),
    #[error("need at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("column length mismatch: `{column}` has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("propensity score {value} at unit {unit} is outside (0, 1)")]
    ScoreOutOfRange { unit: usize, value: f64 },
    #[error("design width mismatch: expected {expected} columns, got {found}")]
    DesignWidth { expected: usize, found: usize },
    #[error("logistic regression did not converge after {iterations} iterations (likely complete separation)")]
    LogisticNonConvergence { iterations: usize },
    #[error("logistic regression fitted probabilities hit 0 or 1 (complete separation)")]
    Separation,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("the overlap region lacks exposure group {0}; missing potential outcomes cannot be imputed")]
    RegionMissingGroup(u8),
    #[error("smoothing design is rank deficient: {rows} rows for {cols} columns")]
    SmoothingRankDeficient { rows: usize, cols: usize },
    #[error("trimmed sample too small: {0} units in the overlap region (need at least 20)")]
    TrimmedTooSmall(usize),
    #[error("arcsine input {0} outside [-1, 1]")]
    ArcsineDomain(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("all {attempted} simulated replicates were screened out ({rejected} rejected by the interior-gap rule)")]
    AllScreenedOut { attempted: usize, rejected: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
