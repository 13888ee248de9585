//! Linear MMSE prediction of the DL grid from the vectorized UL grid.
//!
//! All DL entries are predicted jointly: `vec(Ĥ_DL) = C · vec(H_UL)` with
//! `C = R_cross (R_auto + δI)⁻¹`, where `R_cross = E[vec(H_DL) vec(H_UL)ᴴ]`
//! and `R_auto = E[vec(H_UL) vec(H_UL)ᴴ]` are sample means over the
//! training pairs. Vectorization follows the CSI storage order.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csi::{Band, CsiMatrix};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

const MAGIC: &[u8; 4] = b"LMSE";
const VERSION: u32 = 1;

/// Ratio of smallest to largest squared Cholesky pivot below which the
/// regularized auto-correlation is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Relative ridge used by [`Ridge::Auto`], scaled by `trace(R_auto)/dim`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Ridge {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmmseOptions {
    pub ridge: Ridge,
    /// Subtract the training means before correlating and add the DL mean
    /// back after prediction.
    pub remove_mean: bool,
}

impl Default for LmmseOptions {
    fn default() -> Self {
        Self {
            ridge: Ridge::Auto,
            remove_mean: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobHeader {
    ul_dims: (usize, usize),
    dl_dims: (usize, usize),
    delta: f64,
    train_count: usize,
    remove_mean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmseModel {
    ul_dims: (usize, usize),
    dl_dims: (usize, usize),
    pub r_cross: DMatrix<Complex64>,
    pub r_auto: DMatrix<Complex64>,
    pub coeff: DMatrix<Complex64>,
    pub delta: f64,
    pub train_count: usize,
    mean_ul: Option<DVector<Complex64>>,
    mean_dl: Option<DVector<Complex64>>,
}

fn column(m: &CsiMatrix) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

/// Solves `C · A = B` for Hermitian positive definite `A`.
fn solve_right_hermitian(a: DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    let diag = chol.l_dirty().diagonal();
    let pivots: Vec<f64> = diag.iter().map(|d| d.norm_sqr()).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min / max < SINGULAR_PIVOT_RATIO {
        return Err(Error::Singular(format!("pivot ratio {:.3e}", min / max)));
    }
    // A is Hermitian, so C·A = B  ⇔  A·Cᴴ = Bᴴ.
    Ok(chol.solve(&b.adjoint()).adjoint())
}

impl LmmseModel {
    /// Fits on `(h_ul, h_dl)` pairs.
    pub fn fit(pairs: &[(&CsiMatrix, &CsiMatrix)], opts: LmmseOptions) -> Result<Self> {
        let (ul0, dl0) = pairs.first().ok_or(Error::Empty("training set"))?;
        let ul_dims = ul0.dims();
        let dl_dims = dl0.dims();
        let n_ul = ul_dims.0 * ul_dims.1;
        let n_dl = dl_dims.0 * dl_dims.1;
        let n = pairs.len();

        let mut x = DMatrix::<Complex64>::zeros(n_ul, n);
        let mut y = DMatrix::<Complex64>::zeros(n_dl, n);
        for (j, (ul, dl)) in pairs.iter().enumerate() {
            ul.check_dims(ul_dims)?;
            dl.check_dims(dl_dims)?;
            x.set_column(j, &column(ul));
            y.set_column(j, &column(dl));
        }

        let (mean_ul, mean_dl) = if opts.remove_mean {
            let mu_x = x.column_mean();
            let mu_y = y.column_mean();
            for mut c in x.column_iter_mut() {
                c -= &mu_x;
            }
            for mut c in y.column_iter_mut() {
                c -= &mu_y;
            }
            (Some(mu_x), Some(mu_y))
        } else {
            (None, None)
        };

        let scale = Complex64::new(1.0 / n as f64, 0.0);
        let r_auto = (&x * x.adjoint()) * scale;
        let r_cross = (&y * x.adjoint()) * scale;

        let delta = match opts.ridge {
            Ridge::Fixed(d) if d >= 0.0 && d.is_finite() => d,
            Ridge::Fixed(d) => return Err(Error::Config(format!("ridge must be >= 0, got {d}"))),
            Ridge::Auto => AUTO_RIDGE_SCALE * r_auto.trace().re / n_ul as f64,
        };
        let mut a = r_auto.clone();
        for i in 0..n_ul {
            a[(i, i)] += delta;
        }
        let coeff = solve_right_hermitian(a, &r_cross)?;

        Ok(Self {
            ul_dims,
            dl_dims,
            r_cross,
            r_auto,
            coeff,
            delta,
            train_count: n,
            mean_ul,
            mean_dl,
        })
    }

    pub fn ul_dims(&self) -> (usize, usize) {
        self.ul_dims
    }

    pub fn dl_dims(&self) -> (usize, usize) {
        self.dl_dims
    }

    pub fn predict(&self, h_ul: &CsiMatrix) -> Result<CsiMatrix> {
        h_ul.check_dims(self.ul_dims)?;
        let mut x = column(h_ul);
        if let Some(mu) = &self.mean_ul {
            x -= mu;
        }
        let mut y = &self.coeff * x;
        if let Some(mu) = &self.mean_dl {
            y += mu;
        }
        CsiMatrix::from_vec(self.dl_dims.0, self.dl_dims.1, Band::Dl, y.as_slice().to_vec())
    }

    /// Writes `b"LMSE"`, `u32` version, `u64` header length, the JSON
    /// header, then `coeff`, `r_cross`, `r_auto` and the optional means as
    /// column-major little-endian `f64` `(re, im)` pairs.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&BlobHeader {
            ul_dims: self.ul_dims,
            dl_dims: self.dl_dims,
            delta: self.delta,
            train_count: self.train_count,
            remove_mean: self.mean_ul.is_some(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut put = |s: &[Complex64]| -> Result<()> {
            let buf: Vec<u8> = s
                .iter()
                .flat_map(|z| z.re.to_le_bytes().into_iter().chain(z.im.to_le_bytes()))
                .collect();
            w.write_all(&buf)?;
            Ok(())
        };
        put(self.coeff.as_slice())?;
        put(self.r_cross.as_slice())?;
        put(self.r_auto.as_slice())?;
        if let (Some(a), Some(b)) = (&self.mean_ul, &self.mean_dl) {
            put(a.as_slice())?;
            put(b.as_slice())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected LMSE".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != VERSION {
            return Err(Error::Format("unsupported LMMSE blob version".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 20 {
            return Err(Error::Format("LMMSE header too large".into()));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let h: BlobHeader = serde_json::from_slice(&header)?;
        let n_ul = h.ul_dims.0 * h.ul_dims.1;
        let n_dl = h.dl_dims.0 * h.dl_dims.1;
        let mut take = |count: usize| -> Result<Vec<Complex64>> {
            let mut buf = vec![0u8; count * 16];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[0..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..16].try_into().unwrap()),
                    )
                })
                .collect())
        };
        let coeff = DMatrix::from_vec(n_dl, n_ul, take(n_dl * n_ul)?);
        let r_cross = DMatrix::from_vec(n_dl, n_ul, take(n_dl * n_ul)?);
        let r_auto = DMatrix::from_vec(n_ul, n_ul, take(n_ul * n_ul)?);
        let (mean_ul, mean_dl) = if h.remove_mean {
            (Some(DVector::from_vec(take(n_ul)?)), Some(DVector::from_vec(take(n_dl)?)))
        } else {
            (None, None)
        };
        Ok(Self {
            ul_dims: h.ul_dims,
            dl_dims: h.dl_dims,
            r_cross,
            r_auto,
            coeff,
            delta: h.delta,
            train_count: h.train_count,
            mean_ul,
            mean_dl,
        })
    }
}

impl Predictor for LmmseModel {
    fn name(&self) -> &str {
        "lmmse"
    }

    fn dl_dims(&self) -> (usize, usize) {
        self.dl_dims
    }

    fn predict(&self, h_ul: &CsiMatrix) -> Result<CsiMatrix> {
        LmmseModel::predict(self, h_ul)
    }
}
