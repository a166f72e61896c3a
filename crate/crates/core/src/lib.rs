//! Multi-label fusion heads over precomputed text and image embeddings, with
//! the supporting pieces: a small tensor library with hand-written gradients,
//! attention, convolution cost models, training, metrics and file formats.

pub mod attention;
pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod tensor;
pub mod training;
pub mod vision;

pub use error::{Error, Result};
pub use tensor::Tensor;
