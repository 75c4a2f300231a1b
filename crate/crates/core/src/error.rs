use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("vincenty iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("need at least {needed} GNSS fixes, got {got}")]
    TooFewFixes { needed: usize, got: usize },
    #[error("timestamps out of order at t={t}")]
    TimestampOrder { t: f64 },
    #[error("GNSS gap of {gap:.3} s at t={t}")]
    GnssGap { t: f64, gap: f64 },
    #[error("expected {expected} wheel samples, got {got}")]
    WrongSampleCount { expected: usize, got: usize },
    #[error(
        "insufficient motion for calibration: {qualifying} qualifying seconds (need {needed})"
    )]
    InsufficientMotion { qualifying: usize, needed: usize },
    #[error("wheel and GNSS data are not aligned at second {second}")]
    AlignmentGap { second: i64 },
    #[error("drive too short: {seconds} s available, {needed} s needed")]
    DriveTooShort { seconds: usize, needed: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty dataset{}", if .0.is_empty() { String::new() } else { format!(": {}", .0) })]
    EmptyDataset(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("forward cache does not match the model it is used with")]
    StaleCache,
    #[error("model has no fitted scaler")]
    ScalerMissing,
    #[error("model has not been trained")]
    UntrainedModel,
    #[error(
        "adaptation slice of {requested} s is invalid ({available} s of target training data)"
    )]
    SliceTooLong { requested: usize, available: usize },
    #[error("expected a {expected} model, got {got}")]
    VariantMismatch { expected: String, got: String },
    #[error("invalid scenario script: {0}")]
    InvalidScript(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: sample at t={t} is off the 10 Hz grid")]
    ExcessJitter { path: String, line: usize, t: f64 },
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("partition '{0}' is empty")]
    EmptyPartition(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
