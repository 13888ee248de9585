//! Prediction quality measures: NMSE of the CSI grid, the delay-domain
//! transform, the time-varying power delay profile and its NMSE, and the
//! combined CPError selection indicator.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::csi::CsiMatrix;
use crate::error::{Error, Result};

/// Power floor applied before taking logarithms.
pub const FLOOR_DB: f64 = -120.0;

/// `‖H − Ĥ‖²_F / ‖H‖²_F`.
pub fn nmse_h(truth: &CsiMatrix, pred: &CsiMatrix) -> Result<f64> {
    pred.check_dims(truth.dims())?;
    let den = truth.frobenius_sq();
    if den == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let num: f64 = truth
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / den)
}

/// Delay-domain response `h(t, τ)`, stored with `τ` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayResponse {
    n_symbols: usize,
    n_taps: usize,
    h: Vec<Complex64>,
}

impl DelayResponse {
    pub fn dims(&self) -> (usize, usize) {
        (self.n_symbols, self.n_taps)
    }

    pub fn get(&self, t: usize, tau: usize) -> Complex64 {
        self.h[t * self.n_taps + tau]
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.h[t * self.n_taps..(t + 1) * self.n_taps]
    }
}

/// `h(t, τ) = (1/K) Σ_k H(t, k) · exp(+j2π τ k / K)` per OFDM symbol.
pub fn delay_response(m: &CsiMatrix) -> DelayResponse {
    let (n_k, n_t) = m.dims();
    let mut h = m.as_slice().to_vec();
    if n_k > 0 {
        let ifft = FftPlanner::new().plan_fft_inverse(n_k);
        ifft.process(&mut h);
        let scale = 1.0 / n_k as f64;
        h.iter_mut().for_each(|z| *z *= scale);
    }
    DelayResponse {
        n_symbols: n_t,
        n_taps: n_k,
        h,
    }
}

/// TV-PDP in dB, `T × K`, stored with `τ` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpMatrix {
    n_symbols: usize,
    n_taps: usize,
    p_db: Vec<f64>,
}

impl PdpMatrix {
    pub fn from_vec(n_symbols: usize, n_taps: usize, p_db: Vec<f64>) -> Result<Self> {
        if p_db.len() != n_symbols * n_taps {
            return Err(Error::Shape {
                expected: (n_symbols, n_taps),
                actual: (p_db.len(), 1),
            });
        }
        Ok(Self {
            n_symbols,
            n_taps,
            p_db,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_symbols, self.n_taps)
    }

    pub fn get(&self, t: usize, tau: usize) -> f64 {
        self.p_db[t * self.n_taps + tau]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p_db
    }

    /// Delay bin of maximum power for symbol `t`.
    pub fn peak(&self, t: usize) -> usize {
        let row = &self.p_db[t * self.n_taps..(t + 1) * self.n_taps];
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }
}

pub fn tv_pdp(m: &CsiMatrix) -> PdpMatrix {
    let dr = delay_response(m);
    let floor = 10f64.powf(FLOOR_DB / 10.0);
    PdpMatrix {
        n_symbols: dr.n_symbols,
        n_taps: dr.n_taps,
        p_db: dr.h.iter().map(|z| 10.0 * z.norm_sqr().max(floor).log10()).collect(),
    }
}

/// `‖P − P̂‖²_F / ‖P‖²_F` over dB entries.
pub fn nmse_p(truth: &PdpMatrix, pred: &PdpMatrix) -> Result<f64> {
    if truth.dims() != pred.dims() {
        return Err(Error::Shape {
            expected: truth.dims(),
            actual: pred.dims(),
        });
    }
    let den: f64 = truth.p_db.iter().map(|p| p * p).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let num: f64 = truth
        .p_db
        .iter()
        .zip(&pred.p_db)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / den)
}

pub fn cp_error(nh: f64, np: f64, lambda2: f64) -> f64 {
    nh + lambda2 * np
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: u64,
    pub nmse_h: f64,
    pub nmse_p: f64,
    pub cp_error: f64,
}

impl MetricRow {
    pub fn compute(sample_id: u64, truth: &CsiMatrix, pred: &CsiMatrix, lambda2: f64) -> Result<Self> {
        let nh = nmse_h(truth, pred)?;
        let np = nmse_p(&tv_pdp(truth), &tv_pdp(pred))?;
        Ok(Self {
            sample_id,
            nmse_h: nh,
            nmse_p: np,
            cp_error: cp_error(nh, np, lambda2),
        })
    }
}

/// Means of per-sample ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n_samples: usize,
    pub nmse_h: f64,
    pub nmse_p: f64,
    pub cp_error: f64,
}

impl MetricSummary {
    pub fn from_rows(rows: &[MetricRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("metric rows"));
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            n_samples: rows.len(),
            nmse_h: mean(|r| r.nmse_h),
            nmse_p: mean(|r| r.nmse_p),
            cp_error: mean(|r| r.cp_error),
        })
    }
}

/// Per-sample rows for aligned `truth`/`pred` lists; ids start at `first_id`.
pub fn evaluate(truth: &[&CsiMatrix], pred: &[CsiMatrix], lambda2: f64, first_id: u64) -> Result<Vec<MetricRow>> {
    if truth.len() != pred.len() {
        return Err(Error::Shape {
            expected: (truth.len(), 1),
            actual: (pred.len(), 1),
        });
    }
    truth
        .iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (t, p))| MetricRow::compute(first_id + i as u64, t, p, lambda2))
        .collect()
}

/// Mean of per-sample `nmse_h`.
pub fn nmse_h_batch(truth: &[&CsiMatrix], pred: &[CsiMatrix]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Empty("metric batch"));
    }
    let mut sum = 0.0;
    for (t, p) in truth.iter().zip(pred) {
        sum += nmse_h(t, p)?;
    }
    Ok(sum / truth.len() as f64)
}
