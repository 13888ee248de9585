use rayon::prelude::*;

use crate::csi::{Band, CsiMatrix};
use crate::error::{Error, Result};

/// Maps a UL grid to a DL estimate.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    fn dl_dims(&self) -> (usize, usize);

    fn predict(&self, h_ul: &CsiMatrix) -> Result<CsiMatrix>;

    /// Order-preserving; samples are independent.
    fn predict_batch(&self, h_ul: &[&CsiMatrix]) -> Result<Vec<CsiMatrix>> {
        h_ul.par_iter().map(|m| self.predict(m)).collect()
    }
}

/// Reuses the UL grid as the DL estimate.
#[derive(Debug, Clone, Copy)]
pub struct StaleUl {
    pub dims: (usize, usize),
}

impl Predictor for StaleUl {
    fn name(&self) -> &str {
        "stale_ul"
    }

    fn dl_dims(&self) -> (usize, usize) {
        self.dims
    }

    fn predict(&self, h_ul: &CsiMatrix) -> Result<CsiMatrix> {
        if h_ul.dims() != self.dims {
            return Err(Error::Shape {
                expected: self.dims,
                actual: h_ul.dims(),
            });
        }
        Ok(h_ul.clone().with_band(Band::Dl))
    }
}

/// Predicts the all-zero grid.
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub dims: (usize, usize),
}

impl Predictor for Zero {
    fn name(&self) -> &str {
        "zero"
    }

    fn dl_dims(&self) -> (usize, usize) {
        self.dims
    }

    fn predict(&self, _h_ul: &CsiMatrix) -> Result<CsiMatrix> {
        Ok(CsiMatrix::zeros(self.dims.0, self.dims.1, Band::Dl))
    }
}
