use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Ul,
    Dl,
}

/// Complex channel grid over `K` subcarriers and `T` OFDM symbols.
///
/// Entries are stored with the subcarrier index varying fastest, i.e.
/// element `(k, t)` lives at `t * K + k`, so each OFDM symbol is one
/// contiguous row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    n_subcarriers: usize,
    n_symbols: usize,
    band: Band,
    data: Vec<Complex64>,
}

impl CsiMatrix {
    pub fn zeros(n_subcarriers: usize, n_symbols: usize, band: Band) -> Self {
        Self {
            n_subcarriers,
            n_symbols,
            band,
            data: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols],
        }
    }

    pub fn from_fn(
        n_subcarriers: usize,
        n_symbols: usize,
        band: Band,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(n_subcarriers * n_symbols);
        for t in 0..n_symbols {
            for k in 0..n_subcarriers {
                data.push(f(k, t));
            }
        }
        Self {
            n_subcarriers,
            n_symbols,
            band,
            data,
        }
    }

    /// Wraps `data` laid out symbol-major (subcarrier fastest).
    pub fn from_vec(
        n_subcarriers: usize,
        n_symbols: usize,
        band: Band,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != n_subcarriers * n_symbols {
            return Err(Error::Shape {
                expected: (n_subcarriers, n_symbols),
                actual: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Format("non-finite CSI entry".into()));
        }
        Ok(Self {
            n_subcarriers,
            n_symbols,
            band,
            data,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_subcarriers, self.n_symbols)
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn with_band(mut self, band: Band) -> Self {
        self.band = band;
        self
    }

    pub fn get(&self, k: usize, t: usize) -> Complex64 {
        self.data[t * self.n_subcarriers + k]
    }

    pub fn set(&mut self, k: usize, t: usize, v: Complex64) {
        self.data[t * self.n_subcarriers + k] = v;
    }

    /// One OFDM symbol across all subcarriers.
    pub fn symbol(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.n_subcarriers..(t + 1) * self.n_subcarriers]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= factor);
        out
    }

    pub(crate) fn check_dims(&self, expected: (usize, usize)) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::Shape {
                expected,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}
