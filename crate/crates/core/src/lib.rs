//! Synthetic paired UL/DL channel data and the non-neural parts of a
//! DL-CSI prediction pipeline: metrics, the LMMSE baseline and an OFDM
//! link-level BER simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod csi;
pub mod dataset;
mod error;
pub mod linklevel;
pub mod lmmse;
pub mod metrics;
pub mod predictor;

pub use csi::{Band, CsiMatrix};
pub use error::{Error, Result};
pub use predictor::Predictor;
