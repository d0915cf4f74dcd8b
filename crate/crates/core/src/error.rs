use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),

    #[error("innovation covariance is singular (det {det:e})")]
    SingularInnovationCovariance { det: f64 },

    #[error("agents {i} and {j} coincide (distance {distance:e} m)")]
    AgentsCoincident { i: usize, j: usize, distance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scene contains no observations")]
    EmptyScene,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate observation for agent {agent} at frame {frame}")]
    DuplicateObservation { frame: i64, agent: i64 },

    #[error("frames for agent {agent} are not monotone")]
    NonMonotoneFrames { agent: i64 },

    #[error("prediction horizon {predicted} does not match ground truth horizon {truth}")]
    HorizonMismatch { predicted: usize, truth: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("reports do not share a horizon grid")]
    GridMismatch,

    #[error("no interaction radius for agent types ({0}, {1})")]
    MissingRadiusEntry(String, String),

    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
