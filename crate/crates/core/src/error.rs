use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("gradient coordinate {coordinate} has magnitude {magnitude} above its bound {bound}")]
    GradientRange {
        coordinate: usize,
        magnitude: f64,
        bound: f64,
    },

    #[error("gradient coordinate {coordinate} is not finite ({value})")]
    InvalidGradient { coordinate: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {index} out of range for dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },

    #[error("activation cache does not match the current network parameters")]
    StaleCache,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("unknown optimizer `{0}`")]
    UnknownOptimizer(String),

    #[error("step {step}: {source}")]
    Step {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("certificate violated: observed gap {observed_gap} exceeds bound {rhs}")]
    CertificateViolation { observed_gap: f64, rhs: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfiguration(msg.into())
    }

    pub(crate) fn at_step(self, step: u64) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
