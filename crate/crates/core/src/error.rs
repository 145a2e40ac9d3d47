use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error kinds raised across ingestion, model evaluation, sampling and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "incomplete design: no record for subject `{subject}`, time {time}, variable `{variable}`"
    )]
    IncompleteDesign {
        subject: String,
        time: usize,
        variable: String,
    },

    #[error("duplicate record for subject `{subject}`, time {time}, variable `{variable}`")]
    DuplicateRecord {
        subject: String,
        time: usize,
        variable: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("variable `{0}` has zero variance and cannot be standardized")]
    DegenerateVariable(String),

    #[error("empty pathway design: {0}")]
    EmptyDesign(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix I - C(phi) is not positive definite at phi = {phi:?}")]
    NotPositiveDefinite { phi: Vec<f64> },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("target shrinkage {target} unattainable: attainable range is ({low}, {high})")]
    Calibration { target: f64, low: f64, high: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("AUC undefined: truth labels contain a single class")]
    UndefinedAuc,

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::IncompleteDesign { .. }
                | Error::DuplicateRecord { .. }
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::DegenerateVariable(_)
                | Error::EmptyDesign(_)
                | Error::Domain(_)
                | Error::UnsupportedMode(_)
                | Error::UndefinedAuc
                | Error::InsufficientDraws(_)
                | Error::Config(_)
                | Error::Calibration { .. }
                | Error::Json(_)
        )
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
