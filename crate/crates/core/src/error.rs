use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model definition error: {0}")]
    ModelDefinition(String),
    #[error("invalid jump map: round-trip error {error:e} exceeds {tolerance:e}")]
    InvalidJumpMap { error: f64, tolerance: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("simulation error at step {step}: {reason}")]
    Simulation { step: usize, reason: String },
    #[error("sampler error at step {step}: {reason}")]
    Sampler { step: usize, reason: String },
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { what, expected, got }
    }
}
