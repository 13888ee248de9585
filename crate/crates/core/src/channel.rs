//! Geometric multipath channel with per-path Doppler.
//!
//! A realization holds a fixed list of paths (gain, delay, Doppler). Its
//! frequency response on subcarrier `k` at time `t` is
//!
//! ```text
//! H(t, k) = Σ_l α_l · exp(j2π ν_l t) · exp(−j2π (k + b) τ_l / K)
//! ```
//!
//! with `τ_l` in units of `1 / (K·Δf)` seconds and `b` the band offset in
//! subcarrier spacings. UL and DL share gains and delays; their Doppler
//! shifts scale with the respective carrier.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csi::{Band, CsiMatrix};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplex {
    Tdd,
    Fdd,
}

/// OFDM grid and carrier layout shared by the UL and DL windows.
///
/// Both bands use the same subcarrier count because path delays are stored
/// in units of the `K`-point grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub n_subcarriers: usize,
    pub ul_symbols: usize,
    pub dl_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
    pub carrier_hz: f64,
    pub duplex: Duplex,
    pub ul_band_offset_hz: f64,
    /// Ignored in TDD, where the DL band equals the UL band.
    pub dl_band_offset_hz: f64,
}

impl Default for LinkConfig {
    /// 36 subcarriers × 7 symbols (three resource blocks over one slot),
    /// 15 kHz spacing, FDD with the DL band one resource block (12 spacings)
    /// above the UL band. The gap sets how much of the DL grid is
    /// recoverable from UL: on a 540 kHz grid the multipath of the vehicular
    /// profiles cannot be resolved, so DL grids a few MHz away are close to
    /// independent of UL and no predictor beats the zero estimate.
    fn default() -> Self {
        Self {
            n_subcarriers: 36,
            ul_symbols: 7,
            dl_symbols: 7,
            subcarrier_spacing_hz: 15e3,
            symbol_duration_s: 0.5e-3 / 7.0,
            carrier_hz: 2.0e9,
            duplex: Duplex::Fdd,
            ul_band_offset_hz: 0.0,
            dl_band_offset_hz: 12.0 * 15e3,
        }
    }
}

impl LinkConfig {
    pub fn tdd() -> Self {
        Self {
            duplex: Duplex::Tdd,
            dl_band_offset_hz: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be > 0");
        }
        if self.ul_symbols == 0 || self.dl_symbols == 0 {
            return bad("ul_symbols and dl_symbols must be > 0");
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return bad("subcarrier_spacing_hz must be > 0");
        }
        if !(self.symbol_duration_s > 0.0 && self.symbol_duration_s.is_finite()) {
            return bad("symbol_duration_s must be > 0");
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return bad("carrier_hz must be > 0");
        }
        if !self.ul_band_offset_hz.is_finite() || !self.dl_band_offset_hz.is_finite() {
            return bad("band offsets must be finite");
        }
        Ok(())
    }

    pub fn band_offset_hz(&self, band: Band) -> f64 {
        match (band, self.duplex) {
            (Band::Ul, _) | (Band::Dl, Duplex::Tdd) => self.ul_band_offset_hz,
            (Band::Dl, Duplex::Fdd) => self.dl_band_offset_hz,
        }
    }

    pub fn band_carrier_hz(&self, band: Band) -> f64 {
        self.carrier_hz + self.band_offset_hz(band)
    }

    pub fn symbols(&self, band: Band) -> usize {
        match band {
            Band::Ul => self.ul_symbols,
            Band::Dl => self.dl_symbols,
        }
    }

    /// Duration of one delay sample, `1 / (K·Δf)`.
    pub fn delay_sample_s(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_samples: f64,
    pub avg_power_db: f64,
}

/// Tapped-delay-line power profile with delays on the grid's sample scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdlProfile {
    pub name: String,
    pub taps: Vec<Tap>,
}

impl TdlProfile {
    pub fn new(name: impl Into<String>, taps: Vec<Tap>) -> Result<Self> {
        let p = Self {
            name: name.into(),
            taps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Config(format!("profile {:?} has no taps", self.name)));
        }
        for tap in &self.taps {
            if !tap.avg_power_db.is_finite() {
                return Err(Error::Config(format!("profile {:?}: non-finite tap power", self.name)));
            }
            if !(tap.delay_samples >= 0.0 && tap.delay_samples.is_finite()) {
                return Err(Error::Config(format!("profile {:?}: negative delay", self.name)));
            }
        }
        Ok(())
    }

    /// Sum of linear tap powers, the expected per-entry channel energy.
    pub fn total_power(&self) -> f64 {
        self.taps
            .iter()
            .map(|t| 10f64.powf(t.avg_power_db / 10.0))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapNs {
    pub delay_ns: f64,
    pub power_db: f64,
}

/// Profile as written in JSON documents, with delays in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDef {
    pub name: String,
    pub taps: Vec<TapNs>,
}

// 3GPP TS 36.101 Annex B.2 extended models: (delay ns, relative power dB).
const EPA: [(f64, f64); 7] = [
    (0.0, 0.0),
    (30.0, -1.0),
    (70.0, -2.0),
    (90.0, -3.0),
    (110.0, -8.0),
    (190.0, -17.2),
    (410.0, -20.8),
];
const EVA: [(f64, f64); 9] = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
];
const ETU: [(f64, f64); 9] = [
    (0.0, -1.0),
    (50.0, -1.0),
    (120.0, -1.0),
    (200.0, 0.0),
    (230.0, 0.0),
    (500.0, 0.0),
    (1600.0, -3.0),
    (2300.0, -5.0),
    (5000.0, -7.0),
];

impl ProfileDef {
    pub const BUILTIN: [&'static str; 3] = ["EPA", "EVA", "ETU"];

    pub fn builtin(name: &str) -> Option<Self> {
        let table: &[(f64, f64)] = match name.to_ascii_uppercase().as_str() {
            "EPA" => &EPA,
            "EVA" => &EVA,
            "ETU" => &ETU,
            _ => return None,
        };
        Some(Self {
            name: name.to_ascii_uppercase(),
            taps: table
                .iter()
                .map(|&(delay_ns, power_db)| TapNs { delay_ns, power_db })
                .collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Converts delays to grid samples and checks them against `cfg`.
    pub fn resolve(&self, cfg: &LinkConfig) -> Result<TdlProfile> {
        let sample = cfg.delay_sample_s();
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                delay_samples: t.delay_ns * 1e-9 / sample,
                avg_power_db: t.power_db,
            })
            .collect();
        let profile = TdlProfile::new(self.name.clone(), taps)?;
        if let Some(t) = profile
            .taps
            .iter()
            .find(|t| t.delay_samples >= cfg.n_subcarriers as f64)
        {
            return Err(Error::Config(format!(
                "profile {:?}: delay {:.3} samples not representable on a {}-point grid",
                self.name, t.delay_samples, cfg.n_subcarriers
            )));
        }
        Ok(profile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub delay_samples: f64,
    /// Doppler shift on the UL carrier.
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathComponent>,
    pub ul_carrier_hz: f64,
    pub dl_carrier_hz: f64,
    pub speed_mps: f64,
    pub n_subcarriers: usize,
    /// Band offsets in units of the subcarrier spacing.
    pub ul_offset_bins: f64,
    pub dl_offset_bins: f64,
}

impl ChannelRealization {
    /// Realization with explicit paths on the bands of `cfg`.
    pub fn from_paths(paths: Vec<PathComponent>, cfg: &LinkConfig, speed_mps: f64) -> Result<Self> {
        cfg.validate()?;
        if paths.is_empty() {
            return Err(Error::Config("realization needs at least one path".into()));
        }
        for p in &paths {
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return Err(Error::Config("non-finite path gain".into()));
            }
            if !(p.delay_samples >= 0.0 && p.delay_samples < cfg.n_subcarriers as f64) {
                return Err(Error::Config(format!(
                    "path delay {} outside [0, {})",
                    p.delay_samples, cfg.n_subcarriers
                )));
            }
        }
        Ok(Self {
            paths,
            ul_carrier_hz: cfg.band_carrier_hz(Band::Ul),
            dl_carrier_hz: cfg.band_carrier_hz(Band::Dl),
            speed_mps,
            n_subcarriers: cfg.n_subcarriers,
            ul_offset_bins: cfg.band_offset_hz(Band::Ul) / cfg.subcarrier_spacing_hz,
            dl_offset_bins: cfg.band_offset_hz(Band::Dl) / cfg.subcarrier_spacing_hz,
        })
    }

    pub fn doppler_hz(&self, path: &PathComponent, band: Band) -> f64 {
        match band {
            Band::Ul => path.doppler_hz,
            Band::Dl => path.doppler_hz * self.dl_carrier_hz / self.ul_carrier_hz,
        }
    }

    fn offset_bins(&self, band: Band) -> f64 {
        match band {
            Band::Ul => self.ul_offset_bins,
            Band::Dl => self.dl_offset_bins,
        }
    }

    /// Frequency response on subcarrier `k` at absolute time `t` seconds.
    pub fn frequency_response(&self, band: Band, t: f64, k: usize) -> Result<Complex64> {
        if k >= self.n_subcarriers {
            return Err(Error::SubcarrierIndex {
                k,
                n_subcarriers: self.n_subcarriers,
            });
        }
        let kk = self.n_subcarriers as f64;
        let f = k as f64 + self.offset_bins(band);
        Ok(self
            .paths
            .iter()
            .map(|p| {
                let phase = 2.0 * PI * self.doppler_hz(p, band) * t - 2.0 * PI * f * p.delay_samples / kk;
                p.gain * Complex64::from_polar(1.0, phase)
            })
            .sum())
    }

    /// `K × T_band` grid sampled at `t0 + i·T_sym`.
    pub fn csi_matrix(&self, band: Band, cfg: &LinkConfig, t0: f64) -> CsiMatrix {
        let n_k = self.n_subcarriers;
        let n_t = cfg.symbols(band);
        let kk = n_k as f64;
        let off = self.offset_bins(band);
        let mut out = CsiMatrix::zeros(n_k, n_t, band);
        for p in &self.paths {
            let nu = self.doppler_hz(p, band);
            let freq_phasors: Vec<Complex64> = (0..n_k)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * (k as f64 + off) * p.delay_samples / kk))
                .collect();
            for i in 0..n_t {
                let t = t0 + i as f64 * cfg.symbol_duration_s;
                let time_phasor = p.gain * Complex64::from_polar(1.0, 2.0 * PI * nu * t);
                for (k, fp) in freq_phasors.iter().enumerate() {
                    let v = out.get(k, i) + time_phasor * fp;
                    out.set(k, i, v);
                }
            }
        }
        out
    }

    /// UL window `[t0, t0 + T_UL·T_sym)` followed by the DL window of the
    /// next `T_DL` symbols.
    pub fn ul_dl_pair(&self, cfg: &LinkConfig, t0: f64) -> (CsiMatrix, CsiMatrix) {
        let ul = self.csi_matrix(Band::Ul, cfg, t0);
        let dl = self.csi_matrix(
            Band::Dl,
            cfg,
            t0 + cfg.ul_symbols as f64 * cfg.symbol_duration_s,
        );
        (ul, dl)
    }
}

/// Draws one realization: circular Gaussian gains with the tap powers as
/// variances, and Doppler `f_max·cos θ` with θ uniform on `[0, 2π)`.
pub fn sample_realization<R: Rng + ?Sized>(
    profile: &TdlProfile,
    cfg: &LinkConfig,
    speed_mps: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    profile.validate()?;
    if !(speed_mps >= 0.0 && speed_mps.is_finite()) {
        return Err(Error::Config(format!("speed must be >= 0, got {speed_mps}")));
    }
    let f_max = speed_mps / SPEED_OF_LIGHT * cfg.band_carrier_hz(Band::Ul);
    let paths = profile
        .taps
        .iter()
        .map(|tap| {
            let sigma = (10f64.powf(tap.avg_power_db / 10.0) / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let theta = rng.random_range(0.0..2.0 * PI);
            PathComponent {
                gain: Complex64::new(sigma * re, sigma * im),
                delay_samples: tap.delay_samples,
                doppler_hz: f_max * theta.cos(),
            }
        })
        .collect();
    ChannelRealization::from_paths(paths, cfg, speed_mps)
}

/// Draws a standard circular Gaussian sample, `E|z|² = 1`.
pub fn circular_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
