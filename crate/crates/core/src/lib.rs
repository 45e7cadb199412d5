//! Desk-scale multimodal emotion classifier built around a trainable
//! key-value prompt pool: imbalanced modality encoders, masked adaptive
//! attention fusion, sparse prompt gating, and contrastive prompt matching,
//! with a two-stage training pipeline and a modality-missingness
//! evaluation protocol.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod pattern;
pub mod pool;
pub mod sff;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
