//! Subject-disentangled stress classification from wearable signals.
//!
//! An encoder maps a flattened trial to a latent `z`, which is split into a
//! task part `z_a` and a nuisance part `z_n`. An adversary tries to recover
//! the subject from `z_a` while the encoder is trained to defeat it; a
//! nuisance network recovers the subject from `z_n` while the encoder is
//! trained to help it. A classifier reads `[z_a, z_n, subject]`.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use model::{ConditioningMode, DisentangledModel, ModelConfig};
pub use training::{train, train_batch, TrainConfig};
