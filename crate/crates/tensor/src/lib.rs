//! Reverse-mode differentiation over small dense tensors.
//!
//! The op set covers what a convolutional encoder-decoder generator and a
//! convolutional classifier need: 2-D convolution and its transpose, batch
//! normalization, pointwise activations, dense layers, channel concatenation
//! and BCE/L1/MSE losses. Training math runs in `f64`; checkpoints store
//! `f32`.

#![allow(clippy::needless_range_loop)]

mod adam;
pub mod checkpoint;
mod conv;
mod error;
pub mod gradcheck;
pub mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::ConvGeometry;
pub use error::{Result, TensorError};
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dense, LayerSpec};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Mode, Tape, Var, BCE_CLAMP};
pub use tensor::Tensor;
