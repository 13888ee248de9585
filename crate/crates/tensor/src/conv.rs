//! Convolution kernels over `[N, C, H, W]` buffers.
//!
//! Both directions are expressed through one im2col lowering so that the
//! transposed convolution is the exact adjoint of the forward convolution.

use crate::error::{Result, TensorError};

/// Spatial bookkeeping for a 2-D cross-correlation with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

fn out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl ConvGeometry {
    /// Geometry of a forward convolution, `out = floor((in + 2p - k) / s) + 1`.
    pub fn forward(
        in_hw: (usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let out_h = out_dim(in_hw.0, kernel.0, stride.0, pad.0);
        let out_w = out_dim(in_hw.1, kernel.1, stride.1, pad.1);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if out_h > 0 && out_w > 0 && in_hw.0 > 0 && in_hw.1 > 0 => {
                Ok(Self {
                    in_h: in_hw.0,
                    in_w: in_hw.1,
                    out_h,
                    out_w,
                    k_h: kernel.0,
                    k_w: kernel.1,
                    stride,
                    pad,
                })
            }
            _ => Err(TensorError::EmptyOutput {
                op: "conv2d",
                input: vec![in_hw.0, in_hw.1],
            }),
        }
    }

    /// Geometry of the transposed convolution mapping `in_hw` up to
    /// `output_size`. Valid exactly when a forward convolution with the same
    /// kernel, stride and padding maps `output_size` back to `in_hw`.
    pub fn transpose(
        in_hw: (usize, usize),
        output_size: (usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let err = || TensorError::InvalidOutputSize {
            input: in_hw,
            requested: output_size,
            stride,
            pad,
        };
        let g = Self::forward(output_size, kernel, stride, pad).map_err(|_| err())?;
        if (g.out_h, g.out_w) != in_hw {
            return Err(err());
        }
        Ok(g)
    }

    pub(crate) fn patch_len(&self, channels: usize) -> usize {
        channels * self.k_h * self.k_w
    }

    pub(crate) fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub(crate) fn in_pixels(&self) -> usize {
        self.in_h * self.in_w
    }
}

/// Lowers one `[C, in_h, in_w]` image into columns `offset..offset + P` of
/// a `[C*k_h*k_w, ld]` matrix, `P = out_h*out_w`.
fn im2col(x: &[f64], channels: usize, g: &ConvGeometry, cols: &mut [f64], ld: usize, offset: usize) {
    for c in 0..channels {
        for i in 0..g.k_h {
            for j in 0..g.k_w {
                let row = ((c * g.k_h + i) * g.k_w + j) * ld + offset;
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride.0 + i) as isize - g.pad.0 as isize;
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride.1 + j) as isize - g.pad.1 as isize;
                        cols[row + oh * g.out_w + ow] = if ih >= 0
                            && (ih as usize) < g.in_h
                            && iw >= 0
                            && (iw as usize) < g.in_w
                        {
                            x[(c * g.in_h + ih as usize) * g.in_w + iw as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns `offset..offset + P` of a `[C*k_h*k_w, ld]` matrix
/// back onto a `[C, in_h, in_w]` image.
fn col2im(cols: &[f64], channels: usize, g: &ConvGeometry, x: &mut [f64], ld: usize, offset: usize) {
    for c in 0..channels {
        for i in 0..g.k_h {
            for j in 0..g.k_w {
                let row = ((c * g.k_h + i) * g.k_w + j) * ld + offset;
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride.0 + i) as isize - g.pad.0 as isize;
                    if ih < 0 || ih as usize >= g.in_h {
                        continue;
                    }
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride.1 + j) as isize - g.pad.1 as isize;
                        if iw < 0 || iw as usize >= g.in_w {
                            continue;
                        }
                        x[(c * g.in_h + ih as usize) * g.in_w + iw as usize] +=
                            cols[row + oh * g.out_w + ow];
                    }
                }
            }
        }
    }
}

/// Column matrix `[C*k_h*k_w, N*P]` of a whole batch, image `n` in columns
/// `n*P..(n+1)*P`.
fn batch_cols(x: &[f64], batch: usize, in_ch: usize, g: &ConvGeometry) -> Vec<f64> {
    let p = g.out_pixels();
    let ld = batch * p;
    let in_stride = in_ch * g.in_pixels();
    let mut cols = vec![0.0; g.patch_len(in_ch) * ld];
    for n in 0..batch {
        im2col(&x[n * in_stride..(n + 1) * in_stride], in_ch, g, &mut cols, ld, n * p);
    }
    cols
}

/// `[N, F, P]` → `[F, N*P]`.
fn batch_major_to_channel_major(y: &[f64], batch: usize, ch: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for n in 0..batch {
        for f in 0..ch {
            out[f * batch * p + n * p..][..p].copy_from_slice(&y[(n * ch + f) * p..][..p]);
        }
    }
    out
}

/// `[F, N*P]` → `[N, F, P]`.
fn channel_major_to_batch_major(y: &[f64], batch: usize, ch: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for n in 0..batch {
        for f in 0..ch {
            out[(n * ch + f) * p..][..p].copy_from_slice(&y[f * batch * p + n * p..][..p]);
        }
    }
    out
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×n] += aᵀ · b` with `a` stored `[k×m]`.
fn gemm_at_b_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += api * bv;
            }
        }
    }
}

/// `c[m×n] += a · bᵀ` with `b` stored `[n×k]`.
fn gemm_a_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// Forward cross-correlation. `x` is `[N, C, in_h, in_w]`, `w` is
/// `[F, C, k_h, k_w]`; returns `[N, F, out_h, out_w]` without bias.
pub(crate) fn conv_forward(
    x: &[f64],
    w: &[f64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let p = g.out_pixels();
    let cols = batch_cols(x, batch, in_ch, g);
    let mut y = vec![0.0; out_ch * batch * p];
    gemm_acc(w, &cols, &mut y, out_ch, g.patch_len(in_ch), batch * p);
    channel_major_to_batch_major(&y, batch, out_ch, p)
}

/// Adjoint of [`conv_forward`] with respect to its input: maps
/// `[N, F, out_h, out_w]` back to `[N, C, in_h, in_w]`.
pub(crate) fn conv_backward_data(
    dy: &[f64],
    w: &[f64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let kk = g.patch_len(in_ch);
    let p = g.out_pixels();
    let ld = batch * p;
    let dy = batch_major_to_channel_major(dy, batch, out_ch, p);
    let mut dcols = vec![0.0; kk * ld];
    gemm_at_b_acc(w, &dy, &mut dcols, kk, out_ch, ld);
    let in_stride = in_ch * g.in_pixels();
    let mut dx = vec![0.0; batch * in_stride];
    for n in 0..batch {
        col2im(&dcols, in_ch, g, &mut dx[n * in_stride..(n + 1) * in_stride], ld, n * p);
    }
    dx
}

/// Gradient of [`conv_forward`] with respect to the kernel, `[F, C, k_h, k_w]`.
pub(crate) fn conv_backward_weight(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let kk = g.patch_len(in_ch);
    let p = g.out_pixels();
    let cols = batch_cols(x, batch, in_ch, g);
    let dy = batch_major_to_channel_major(dy, batch, out_ch, p);
    let mut dw = vec![0.0; out_ch * kk];
    gemm_a_bt_acc(&dy, &cols, &mut dw, out_ch, batch * p, kk);
    dw
}
