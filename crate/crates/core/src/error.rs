use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("CFL violation: {requested} substeps requested, {required} required")]
    CflViolation { requested: usize, required: usize },

    #[error("non-finite value in {stage} at t = {time}")]
    NonFinite { stage: &'static str, time: f64 },

    #[error("SQH stalled at iteration {iteration}: epsilon grew to {eps} without acceptance")]
    StalledEps { iteration: usize, eps: f64 },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("empty snapshot")]
    EmptySnapshot,

    #[error("initial sampler produced no in-domain point after {0} draws")]
    SamplerExhausted(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Stable short tag used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::CflViolation { .. } => "cfl_violation",
            Error::NonFinite { .. } => "non_finite",
            Error::StalledEps { .. } => "stalled_eps",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::Config { .. } => "config",
            Error::EmptySnapshot => "empty_snapshot",
            Error::SamplerExhausted(_) => "sampler_exhausted",
            Error::Io(_) => "io",
        }
    }
}
