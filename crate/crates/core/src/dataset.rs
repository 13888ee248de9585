//! Paired UL/DL CSI datasets: generation, normalization, persistence and
//! the two-channel real layout consumed by the networks.
//!
//! On disk a dataset is a `.csid` binary file plus a JSON sidecar with the
//! same stem. Samples are quantized to `f32` when generated, so a saved and
//! reloaded dataset is bit-identical to the one produced in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_realization, LinkConfig, TdlProfile};
use crate::csi::{Band, CsiMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSID";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 * 4 + 8 + 8;

/// Width of the window from which each sample's start time is drawn.
pub const T0_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub speed_mps: f64,
    pub profile_name: String,
    pub seed_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub h_ul: CsiMatrix,
    pub h_dl: CsiMatrix,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub k_ul: u32,
    pub t_ul: u32,
    pub k_dl: u32,
    pub t_dl: u32,
    pub n_samples: u64,
    pub master_seed: u64,
}

impl DatasetHeader {
    pub fn ul_dims(&self) -> (usize, usize) {
        (self.k_ul as usize, self.t_ul as usize)
    }

    pub fn dl_dims(&self) -> (usize, usize) {
        (self.k_dl as usize, self.t_dl as usize)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        for d in [self.k_ul, self.t_ul, self.k_dl, self.t_dl] {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.n_samples.to_le_bytes())?;
        w.write_all(&self.master_seed.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        r.read_exact(&mut buf)?;
        if &buf[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected CSID".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let header = Self {
            version: u32_at(4),
            k_ul: u32_at(8),
            t_ul: u32_at(12),
            k_dl: u32_at(16),
            t_dl: u32_at(20),
            n_samples: u64_at(24),
            master_seed: u64_at(32),
        };
        if header.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", header.version)));
        }
        if [header.k_ul, header.t_ul, header.k_dl, header.t_dl].contains(&0) {
            return Err(Error::Format("zero matrix dimension in header".into()));
        }
        Ok(header)
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &CsiMatrix) -> Result<()> {
    for z in m.as_slice() {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, (k, t): (usize, usize), band: Band) -> Result<CsiMatrix> {
    let mut buf = vec![0u8; k * t * 8];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    CsiMatrix::from_vec(k, t, band, data)
}

/// Writes the binary body: header, then per sample the UL block followed by
/// the DL block as interleaved `(re, im)` f32 pairs.
pub fn write_csid<W: Write>(w: &mut W, header: &DatasetHeader, pairs: &[(&CsiMatrix, &CsiMatrix)]) -> Result<()> {
    if header.n_samples != pairs.len() as u64 {
        return Err(Error::Format(format!(
            "header declares {} samples, got {}",
            header.n_samples,
            pairs.len()
        )));
    }
    header.write_to(w)?;
    for (ul, dl) in pairs {
        ul.check_dims(header.ul_dims())?;
        dl.check_dims(header.dl_dims())?;
        write_matrix(w, ul)?;
        write_matrix(w, dl)?;
    }
    Ok(())
}

pub fn read_csid<R: Read>(r: &mut R) -> Result<(DatasetHeader, Vec<(CsiMatrix, CsiMatrix)>)> {
    let header = DatasetHeader::read_from(r)?;
    let mut pairs = Vec::with_capacity(header.n_samples.min(1 << 20) as usize);
    for _ in 0..header.n_samples {
        let ul = read_matrix(r, header.ul_dims(), Band::Ul)?;
        let dl = read_matrix(r, header.dl_dims(), Band::Dl)?;
        pairs.push((ul, dl));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after last sample".into()));
    }
    Ok((header, pairs))
}

#[derive(Debug, Clone)]
pub struct WeightedProfile {
    pub profile: TdlProfile,
    pub weight: f64,
}

impl WeightedProfile {
    pub fn single(profile: TdlProfile) -> Vec<Self> {
        vec![Self { profile, weight: 1.0 }]
    }
}

/// Everything needed to interpret a `.csid` file; persisted as its sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub link: LinkConfig,
    pub profiles: Vec<String>,
    pub weights: Vec<f64>,
    pub speed_mps: f64,
    pub master_seed: u64,
    /// Seed index of the first sample; splits keep the generation indices.
    pub first_index: u64,
    /// Index into `profiles` per sample.
    pub sample_profiles: Vec<u16>,
    #[serde(default)]
    pub ratios: Option<[f64; 3]>,
    #[serde(default)]
    pub normalization: Option<NormalizationStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub info: DatasetInfo,
    pub samples: Vec<CsiSample>,
}

fn quantize(m: &mut CsiMatrix) {
    for z in m.as_mut_slice() {
        *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
    }
}

/// Per-sample generator stream, independent of how samples are scheduled.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Generates `n` samples. Sample `i` depends only on `(master_seed, i)`.
pub fn generate(
    cfg: &LinkConfig,
    mix: &[WeightedProfile],
    speed_mps: f64,
    n: usize,
    master_seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset size must be > 0".into()));
    }
    if mix.is_empty() {
        return Err(Error::Config("at least one profile is required".into()));
    }
    if mix.len() > u16::MAX as usize {
        return Err(Error::Config("too many profiles".into()));
    }
    if mix.iter().any(|w| !(w.weight > 0.0 && w.weight.is_finite())) {
        return Err(Error::Config("profile weights must be > 0".into()));
    }
    for w in mix {
        w.profile.validate()?;
    }
    let total: f64 = mix.iter().map(|w| w.weight).sum();
    let cumulative: Vec<f64> = mix
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w.weight / total;
            Some(*acc)
        })
        .collect();

    let generated: Vec<(u16, CsiSample)> = (0..n as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = sample_rng(master_seed, index);
            let u: f64 = rng.random();
            let choice = cumulative.iter().position(|&c| u < c).unwrap_or(mix.len() - 1);
            let profile = &mix[choice].profile;
            let realization = sample_realization(profile, cfg, speed_mps, &mut rng)?;
            let t0 = rng.random_range(0.0..T0_WINDOW_S);
            let (mut h_ul, mut h_dl) = realization.ul_dl_pair(cfg, t0);
            quantize(&mut h_ul);
            quantize(&mut h_dl);
            Ok((
                choice as u16,
                CsiSample {
                    h_ul,
                    h_dl,
                    meta: SampleMeta {
                        speed_mps,
                        profile_name: profile.name.clone(),
                        seed_index: index,
                    },
                },
            ))
        })
        .collect::<Result<_>>()?;

    let (sample_profiles, samples) = generated.into_iter().unzip();
    Ok(Dataset {
        info: DatasetInfo {
            link: cfg.clone(),
            profiles: mix.iter().map(|w| w.profile.name.clone()).collect(),
            weights: mix.iter().map(|w| w.weight).collect(),
            speed_mps,
            master_seed,
            first_index: 0,
            sample_profiles,
            ratios: None,
            normalization: None,
        },
        samples,
    })
}

/// Sample counts for contiguous train/val/test ranges. Boundaries are
/// rounded cumulatively so the three counts never exceed `n`.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::Split(format!("ratios must be >= 0, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if sum > 1.0 + 1e-9 {
        return Err(Error::Split(format!("ratios sum to {sum} > 1")));
    }
    let edge = |r: f64| ((n as f64 * r).round() as usize).min(n);
    let a = edge(ratios[0]);
    let b = edge(ratios[0] + ratios[1]).max(a);
    let c = edge(sum).max(b);
    Ok((a, b - a, c - b))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ul_dims(&self) -> (usize, usize) {
        (self.info.link.n_subcarriers, self.info.link.ul_symbols)
    }

    pub fn dl_dims(&self) -> (usize, usize) {
        (self.info.link.n_subcarriers, self.info.link.dl_symbols)
    }

    pub fn header(&self) -> DatasetHeader {
        let (k_ul, t_ul) = self.ul_dims();
        let (k_dl, t_dl) = self.dl_dims();
        DatasetHeader {
            version: FORMAT_VERSION,
            k_ul: k_ul as u32,
            t_ul: t_ul as u32,
            k_dl: k_dl as u32,
            t_dl: t_dl as u32,
            n_samples: self.samples.len() as u64,
            master_seed: self.info.master_seed,
        }
    }

    fn slice(&self, start: usize, len: usize) -> Dataset {
        let mut info = self.info.clone();
        info.first_index = self.info.first_index + start as u64;
        info.sample_profiles = self.info.sample_profiles[start..start + len].to_vec();
        Dataset {
            info,
            samples: self.samples[start..start + len].to_vec(),
        }
    }

    /// Contiguous train/val/test partition in generation order.
    pub fn split(&self, ratios: [f64; 3]) -> Result<(Dataset, Dataset, Dataset)> {
        let (a, b, c) = split_counts(self.len(), ratios)?;
        let mut parts = [self.slice(0, a), self.slice(a, b), self.slice(a + b, c)];
        for p in &mut parts {
            p.info.ratios = Some(ratios);
        }
        let [train, val, test] = parts;
        Ok((train, val, test))
    }

    pub fn h_ul(&self) -> Vec<&CsiMatrix> {
        self.samples.iter().map(|s| &s.h_ul).collect()
    }

    pub fn h_dl(&self) -> Vec<&CsiMatrix> {
        self.samples.iter().map(|s| &s.h_dl).collect()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let pairs: Vec<_> = self.samples.iter().map(|s| (&s.h_ul, &s.h_dl)).collect();
        write_csid(w, &self.header(), &pairs)
    }

    /// Writes `path` and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        let sidecar = serde_json::to_string_pretty(&self.info)?;
        std::fs::write(Self::sidecar_path(path), sidecar + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let info: DatasetInfo = serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(path))?)?;
        let mut r = BufReader::new(File::open(path)?);
        let (header, pairs) = read_csid(&mut r)?;
        Self::assemble(info, header, pairs)
    }

    fn assemble(info: DatasetInfo, header: DatasetHeader, pairs: Vec<(CsiMatrix, CsiMatrix)>) -> Result<Dataset> {
        let link = &info.link;
        if header.ul_dims() != (link.n_subcarriers, link.ul_symbols)
            || header.dl_dims() != (link.n_subcarriers, link.dl_symbols)
        {
            return Err(Error::Format("sidecar link dimensions disagree with header".into()));
        }
        if info.sample_profiles.len() != pairs.len() {
            return Err(Error::Format("sidecar sample count disagrees with header".into()));
        }
        let samples = pairs
            .into_iter()
            .zip(&info.sample_profiles)
            .enumerate()
            .map(|(i, ((h_ul, h_dl), &p))| {
                let profile_name = info
                    .profiles
                    .get(p as usize)
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("profile index {p} out of range")))?;
                Ok(CsiSample {
                    h_ul,
                    h_dl,
                    meta: SampleMeta {
                        speed_mps: info.speed_mps,
                        profile_name,
                        seed_index: info.first_index + i as u64,
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { info, samples })
    }
}

/// Affine map of the training range `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationStats {
    pub lo: f64,
    pub hi: f64,
}

impl NormalizationStats {
    /// Range over the real and imaginary parts of every UL and DL matrix.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a CsiMatrix>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in matrices {
            for z in m.as_slice() {
                lo = lo.min(z.re).min(z.im);
                hi = hi.max(z.re).max(z.im);
            }
        }
        if lo > hi {
            return Err(Error::Empty("training set"));
        }
        Ok(Self { lo, hi })
    }

    pub fn fit_samples(samples: &[CsiSample]) -> Result<Self> {
        Self::fit(samples.iter().flat_map(|s| [&s.h_ul, &s.h_dl]))
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    /// Degenerate stats send every value to 0. Values outside the range
    /// are not clipped.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            return self.lo;
        }
        (y + 1.0) * 0.5 * (self.hi - self.lo) + self.lo
    }

    pub fn normalize_matrix(&self, m: &CsiMatrix) -> Vec<f64> {
        let mut v = to_two_channel(m);
        v.iter_mut().for_each(|x| *x = self.normalize(*x));
        v
    }

    pub fn denormalize_matrix(&self, y: &[f64], dims: (usize, usize), band: Band) -> Result<CsiMatrix> {
        let v: Vec<f64> = y.iter().map(|&x| self.denormalize(x)).collect();
        from_two_channel(&v, dims, band)
    }
}

/// `[2, K, T]` real tensor: channel 0 real parts, channel 1 imaginary parts,
/// index `(c·K + k)·T + t`.
pub fn to_two_channel(m: &CsiMatrix) -> Vec<f64> {
    let (n_k, n_t) = m.dims();
    let mut out = vec![0.0; 2 * n_k * n_t];
    for t in 0..n_t {
        for k in 0..n_k {
            let z = m.get(k, t);
            out[k * n_t + t] = z.re;
            out[(n_k + k) * n_t + t] = z.im;
        }
    }
    out
}

pub fn from_two_channel(v: &[f64], (n_k, n_t): (usize, usize), band: Band) -> Result<CsiMatrix> {
    if v.len() != 2 * n_k * n_t {
        return Err(Error::Shape {
            expected: (2 * n_k, n_t),
            actual: (v.len(), 1),
        });
    }
    let data = (0..n_t)
        .flat_map(|t| (0..n_k).map(move |k| Complex64::new(v[k * n_t + t], v[(n_k + k) * n_t + t])))
        .collect();
    CsiMatrix::from_vec(n_k, n_t, band, data)
}
