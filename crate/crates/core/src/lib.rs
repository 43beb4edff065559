//! Long-horizon multivariate forecasting built on two averaged prediction
//! paths: per-channel linear heads over the raw normalized series, and the
//! same heads over a channel-token embedding of it. Includes the
//! channel-clustering variant that shares heads across correlated groups,
//! a small reverse-mode tensor core, and a train/evaluate pipeline.

pub mod checkpoint;
pub mod cluster;
pub mod data;
mod error;
pub mod model;
pub mod revin;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{grad_check, Gradients, Tensor};
