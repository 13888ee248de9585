//! Frequency-domain OFDM/QPSK link with transmitter-side pre-equalization.
//!
//! The receiver makes hard quadrant decisions on `Y = H ⊙ X + W` with no
//! further equalization, so all channel knowledge sits at the transmitter.
//! The SNR of a frame is its mean received signal power `mean |H ⊙ X|²`
//! over the noise variance.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::circular_gaussian;
use crate::csi::{Band, CsiMatrix};
use crate::dataset::sample_rng;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

pub const DEFAULT_CLIP_GAIN: f64 = 10.0;

/// Gray map: bit pair `(b0, b1)` → `((1 − 2·b0) + j(1 − 2·b1)) / √2`, so
/// `00 → (1+j)/√2` and `11 → (−1−j)/√2` are antipodal.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    let level = |b: u8| if b & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Ok(bits
        .chunks_exact(2)
        .map(|p| Complex64::new(level(p[0]), level(p[1])))
        .collect())
}

pub fn qpsk_demodulate(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub bits: Vec<u8>,
    pub symbols: CsiMatrix,
}

impl TxFrame {
    pub fn random<R: Rng + ?Sized>((n_k, n_t): (usize, usize), rng: &mut R) -> Self {
        let bits: Vec<u8> = (0..2 * n_k * n_t).map(|_| rng.random_range(0..=1u8)).collect();
        let symbols = qpsk_modulate(&bits).expect("even bit count");
        Self {
            bits,
            symbols: CsiMatrix::from_vec(n_k, n_t, Band::Dl, symbols).expect("matching length"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    pub received: CsiMatrix,
    pub noise_variance: f64,
}

fn mean_power(m: &CsiMatrix) -> f64 {
    m.frobenius_sq() / m.as_slice().len().max(1) as f64
}

/// Zero-forcing `S / Ĥ` with the per-entry gain magnitude limited to
/// `clip_gain`, rescaled to the frame power of `S`.
pub fn pre_equalize(s: &CsiMatrix, h_hat: &CsiMatrix, clip_gain: f64) -> Result<CsiMatrix> {
    h_hat.check_dims(s.dims())?;
    if !(clip_gain > 0.0 && clip_gain.is_finite()) {
        return Err(Error::Config(format!("clip_gain must be > 0, got {clip_gain}")));
    }
    let mut x = s.clone();
    for (xi, h) in x.as_mut_slice().iter_mut().zip(h_hat.as_slice()) {
        let mag = h.norm();
        let gain = if mag * clip_gain >= 1.0 {
            1.0 / h
        } else if mag > 0.0 {
            (h.conj() / mag) * clip_gain
        } else {
            Complex64::new(clip_gain, 0.0)
        };
        *xi *= gain;
    }
    let p_s = mean_power(s);
    let p_x = mean_power(&x);
    if p_x > 0.0 {
        let k = (p_s / p_x).sqrt();
        x.as_mut_slice().iter_mut().for_each(|z| *z *= k);
    }
    Ok(x)
}

/// `σ²` for a given received signal power; infinite SNR disables noise.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(snr_db / 10.0)
    }
}

/// `Y = H ⊙ X + σ·Z` for given standard circular Gaussian draws `Z`.
pub fn transmit_with(x: &CsiMatrix, h_true: &CsiMatrix, noise_var: f64, z: &[Complex64]) -> Result<RxFrame> {
    h_true.check_dims(x.dims())?;
    if z.len() != x.as_slice().len() {
        return Err(Error::Shape {
            expected: x.dims(),
            actual: (z.len(), 1),
        });
    }
    let sigma = noise_var.max(0.0).sqrt();
    let mut y = x.clone();
    for ((yi, h), zi) in y.as_mut_slice().iter_mut().zip(h_true.as_slice()).zip(z) {
        *yi = *yi * h + zi * sigma;
    }
    Ok(RxFrame {
        received: y,
        noise_variance: noise_var,
    })
}

pub fn transmit<R: Rng + ?Sized>(x: &CsiMatrix, h_true: &CsiMatrix, noise_var: f64, rng: &mut R) -> Result<RxFrame> {
    let z: Vec<Complex64> = (0..x.as_slice().len()).map(|_| circular_gaussian(rng)).collect();
    transmit_with(x, h_true, noise_var, &z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerMode {
    Perfect,
    Predicted,
    StaleUl,
    None,
}

impl EqualizerMode {
    pub const ALL: [EqualizerMode; 4] = [Self::Perfect, Self::Predicted, Self::StaleUl, Self::None];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Predicted => "predicted",
            Self::StaleUl => "stale_ul",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSimConfig {
    pub snr_db: Vec<f64>,
    pub n_frames: usize,
    pub modes: Vec<EqualizerMode>,
    pub clip_gain: f64,
    pub seed: u64,
}

impl Default for LinkSimConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_frames: 400,
            modes: EqualizerMode::ALL.to_vec(),
            clip_gain: DEFAULT_CLIP_GAIN,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub mode: EqualizerMode,
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
}

/// BER per `(mode, snr)`. Frame `f` uses pair `f mod len` and a random
/// stream derived from `(seed, f)`; bits and noise draws are shared by
/// every mode and SNR point.
pub fn ber_curve(
    pairs: &[(&CsiMatrix, &CsiMatrix)],
    predictor: Option<&dyn Predictor>,
    cfg: &LinkSimConfig,
) -> Result<Vec<BerPoint>> {
    if pairs.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if cfg.n_frames == 0 {
        return Err(Error::Config("n_frames must be >= 1".into()));
    }
    if !(cfg.clip_gain > 0.0) {
        return Err(Error::Config("clip_gain must be > 0".into()));
    }
    let dims = pairs[0].1.dims();
    let predictions = if cfg.modes.contains(&EqualizerMode::Predicted) {
        let p = predictor.ok_or_else(|| Error::Config("predicted mode needs a predictor".into()))?;
        let ul: Vec<&CsiMatrix> = pairs.iter().map(|(u, _)| *u).collect();
        Some(p.predict_batch(&ul)?)
    } else {
        None
    };
    for (ul, dl) in pairs {
        dl.check_dims(dims)?;
        if cfg.modes.contains(&EqualizerMode::StaleUl) {
            ul.check_dims(dims)?;
        }
    }
    if let Some(p) = &predictions {
        for m in p {
            m.check_dims(dims)?;
        }
    }
    let ones = CsiMatrix::from_fn(dims.0, dims.1, Band::Dl, |_, _| Complex64::new(1.0, 0.0));
    let n_points = cfg.modes.len() * cfg.snr_db.len();

    let counts = (0..cfg.n_frames)
        .into_par_iter()
        .map(|f| -> Result<Vec<u64>> {
            let i = f % pairs.len();
            let (ul, dl) = pairs[i];
            let mut rng = sample_rng(cfg.seed, f as u64);
            let frame = TxFrame::random(dims, &mut rng);
            let z: Vec<Complex64> = (0..dims.0 * dims.1).map(|_| circular_gaussian(&mut rng)).collect();
            let mut errors = Vec::with_capacity(n_points);
            for mode in &cfg.modes {
                let h_hat = match mode {
                    EqualizerMode::Perfect => dl,
                    EqualizerMode::Predicted => &predictions.as_ref().expect("computed above")[i],
                    EqualizerMode::StaleUl => ul,
                    EqualizerMode::None => &ones,
                };
                let x = pre_equalize(&frame.symbols, h_hat, cfg.clip_gain)?;
                let clean = transmit_with(&x, dl, 0.0, &z)?;
                let p_rx = mean_power(&clean.received);
                for &snr in &cfg.snr_db {
                    let rx = transmit_with(&x, dl, noise_variance(p_rx, snr), &z)?;
                    let bits = qpsk_demodulate(rx.received.as_slice());
                    errors.push(bits.iter().zip(&frame.bits).filter(|(a, b)| a != b).count() as u64);
                }
            }
            Ok(errors)
        })
        .try_reduce(
            || vec![0u64; n_points],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let bits = (cfg.n_frames * 2 * dims.0 * dims.1) as u64;
    let mut out = Vec::with_capacity(n_points);
    for (m, mode) in cfg.modes.iter().enumerate() {
        for (s, &snr) in cfg.snr_db.iter().enumerate() {
            let errors = counts[m * cfg.snr_db.len() + s];
            out.push(BerPoint {
                mode: *mode,
                snr_db: snr,
                bits,
                errors,
                ber: errors as f64 / bits as f64,
            });
        }
    }
    Ok(out)
}

pub const BER_CSV_HEADER: &str = "mode,snr_db,bits,errors,ber";

pub fn write_ber_csv<W: Write>(mut w: W, points: &[BerPoint]) -> Result<()> {
    writeln!(w, "{BER_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{:e}", p.mode.as_str(), p.snr_db, p.bits, p.errors, p.ber)?;
    }
    Ok(())
}
