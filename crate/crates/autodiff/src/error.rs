use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("backward already ran on this tape; record a new forward pass first")]
    AlreadyBackpropagated,

    #[error("backward requires a single-element output, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),

    #[error("duplicate parameter '{0}'")]
    DuplicateParameter(String),

    #[error(transparent)]
    Core(#[from] utraj_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
