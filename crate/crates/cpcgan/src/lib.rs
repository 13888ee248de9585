//! Conditional-GAN prediction of DL-CSI from UL-CSI.
//!
//! A U-Net generator maps the normalized two-channel UL grid to the DL grid;
//! a convolutional discriminator judges `(UL, DL)` pairs. Training keeps the
//! generator snapshot with the lowest validation CPError. The same generator
//! trained on a plain MSE (or L1) loss serves as the CNN baseline.

pub mod checkpoint;
mod error;
pub mod networks;
pub mod predict;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::{CpcganError, Result};
pub use networks::{Discriminator, Generator, NetSpec};
pub use predict::{mimo_nmse_h, predict_mimo, GanPredictor};
pub use train::{d_loss, g_loss, train, train_cnn_baseline, CnnLoss, LogRecord, Method, TrainConfig, TrainOutput, Trainer};
