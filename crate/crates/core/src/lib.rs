//! Core numerics for uncertainty-aware multi-agent trajectory forecasting:
//! Gaussian primitives, statistical distances, motion models, Kalman-family
//! trackers, the particle simulator, evaluation metrics and file formats.

pub mod dynamics;
pub mod error;
pub mod filters;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scene;
pub mod sim;
pub mod statdist;

pub use error::{Error, Result};
pub use gaussian::{Gaussian2, Gmm2};
pub use linalg::{Mat2, Vec2};
pub use scene::{AgentTrack, AgentType, GtState, Scene, TrackedState};
