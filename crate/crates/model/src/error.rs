use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("no usable forecasting windows in the {0} split")]
    EmptyDataset(&'static str),

    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Core(#[from] utraj_core::Error),

    #[error(transparent)]
    Autodiff(#[from] utraj_autodiff::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
