use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inconsistent vector lengths: {0}")]
    MixedDimensions(String),
    #[error("missingness pattern violated: {0}")]
    MissingnessViolation(String),
    #[error("no units with A={a}, D={d}")]
    EmptyArm { a: u8, d: u8 },
    #[error("cell A={a}, D={d} has {size} units, need at least {min}")]
    CellTooSmall { a: u8, d: u8, size: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("perfect separation detected; set a positive ridge penalty")]
    Separation,
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("class {0} has no examples")]
    MissingClass(u32),
    #[error("label {label} outside 1..={k}")]
    LabelOutOfRange { label: u32, k: usize },
    #[error("unit {0} requires a score but none was supplied")]
    MissingScore(usize),
    #[error("no scored units available for calibration")]
    NoScoredUnits,
    #[error("empty input")]
    EmptyInput,
    #[error("weights must be strictly positive (index {0})")]
    NonPositiveWeight(usize),
    #[error("oracle quantity unavailable: {0}")]
    OracleUnavailable(String),
    #[error("unit {0} surrogate availability does not match the fitted setting")]
    SettingMismatch(usize),
    #[error("method {method} cannot run under setting {setting}")]
    IncompatibleMethodSetting { method: String, setting: String },
    #[error("results and truth are misaligned: {0}")]
    AlignmentError(String),
    #[error("calibration did not converge: {0}")]
    CalibrationFailure(String),
    #[error("{failed} of {total} replicates failed, above the 5% tolerance; first error: {first}")]
    ReplicateFailures { failed: usize, total: usize, first: String },
    #[error("fold hygiene violated: {0}")]
    FoldLeak(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
