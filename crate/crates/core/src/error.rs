use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("singular jacobian")]
    SingularJacobian,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("phase angle undefined at t = {0}")]
    UndefinedAngle(f64),

    #[error("unknown symmetry operation `{0}`")]
    UnknownSymmetry(String),

    #[error("spec hash mismatch: file has {found}, spec hashes to {expected}")]
    SpecMismatch { expected: String, found: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
