//! Uncertainty-aware trajectory forecaster.
//!
//! A discrete-latent CVAE encodes each agent's tracked history (states and
//! their covariances) and its neighborhood, decodes per-step control
//! Gaussians with a GRU, and integrates them through the agent's dynamics to
//! obtain position mixtures. Training combines the log-likelihood with a
//! Bhattacharyya distance to the tracked ground-truth distribution.

pub mod config;
pub mod error;
pub mod features;
pub mod graph;
pub mod loss;
pub mod network;
pub mod predict;
pub mod rollout;
pub mod train;

pub use config::{LossMode, ModelConfig, RadiusEntry, TrainConfig};
pub use error::{Error, Result};
pub use features::{extract_windows, Window};
pub use graph::build_graph;
pub use loss::{batch_loss, LossOutput, LossRegistry, LossStrategy};
pub use network::{Batch, Forecaster};
pub use predict::{evaluate, forecast_samples, mean_first_step_trace, predict, predict_windows, EvalConfig, Prediction};
pub use train::{read_curves, train, write_curves, CurveRow, TrainOutput};
