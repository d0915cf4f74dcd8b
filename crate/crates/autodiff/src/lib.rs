//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] sweeps it once in
//! reverse creation order, so gradient accumulation order is fixed and runs
//! are bit-reproducible. Parameters live in a [`ParamStore`] and enter a tape
//! through [`Tape::param`].

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod nodes;
pub mod params;
pub mod rnn;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{Error, Result};
pub use gradcheck::gradcheck;
pub use params::{ParamId, ParamStore};
pub use rnn::{GruCell, LstmCell};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
