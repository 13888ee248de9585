//! Wengert-list reverse-mode differentiation.
//!
//! Every forward op appends a node holding its value and the handles of its
//! inputs. [`Tape::backward`] walks the list once in reverse, summing
//! contributions when a node fans out to several consumers.

use crate::conv::{self, ConvGeometry};
use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking logarithms in
/// [`Tape::bce_loss`]; the upper clamp is `1 - BCE_CLAMP`.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug)]
struct BatchNormSaved {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch mean and unbiased batch variance, present in train mode only.
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: BatchNormSaved,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Tanh(Var),
    Sigmoid(Var),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Bce {
        p: Var,
        target: Vec<f64>,
    },
    L1(Var, Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradients produced by one [`Tape::backward`] call.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// require gradients or does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter leaf on the tape. Parameters that did not
    /// influence the loss are reported with zero gradients.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params.iter().filter_map(move |&(id, node)| {
            self.grads[node].as_deref().map(|g| (id, g))
        })
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contribution) {
                *a += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

fn shape_err(op: &'static str, expected: &[usize], actual: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a trainable parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    /// Copies `v` into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Batch mean and unbiased variance observed by a train-mode batch-norm
    /// node.
    pub fn batch_stats(&self, v: Var) -> Option<(&[f64], &[f64])> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { saved, .. } => saved
                .batch_stats
                .as_ref()
                .map(|(m, var)| (m.as_slice(), var.as_slice())),
            _ => None,
        }
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4("conv2d")?;
        let (f, wc, kh, kw) = self.value(w).dims4("conv2d")?;
        if wc != c {
            return Err(shape_err("conv2d", &[f, c, kh, kw], self.shape(w)));
        }
        if let Some(b) = b {
            if self.shape(b) != [f] {
                return Err(shape_err("conv2d bias", &[f], self.shape(b)));
            }
        }
        let geom = ConvGeometry::forward((h, wd), (kh, kw), stride, pad)?;
        let mut y = conv::conv_forward(self.value(x).data(), self.value(w).data(), n, c, f, &geom);
        if let Some(b) = b {
            add_channel_bias(&mut y, self.value(b).data(), n, f, geom.out_pixels());
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![n, f, geom.out_h, geom.out_w], y)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Transposed convolution with kernel `[C_in, C_out, k_h, k_w]`, the
    /// adjoint of [`Tape::conv2d`] for the same stride and padding.
    pub fn conv2d_transpose(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
        output_size: (usize, usize),
    ) -> Result<Var> {
        let (n, c_in, h, wd) = self.value(x).dims4("conv2d_transpose")?;
        let (wc, c_out, kh, kw) = self.value(w).dims4("conv2d_transpose")?;
        if wc != c_in {
            return Err(shape_err("conv2d_transpose", &[c_in, c_out, kh, kw], self.shape(w)));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(shape_err("conv2d_transpose bias", &[c_out], self.shape(b)));
            }
        }
        let geom = ConvGeometry::transpose((h, wd), output_size, (kh, kw), stride, pad)?;
        let mut y =
            conv::conv_backward_data(self.value(x).data(), self.value(w).data(), n, c_out, c_in, &geom);
        if let Some(b) = b {
            add_channel_bias(&mut y, self.value(b).data(), n, c_out, geom.in_pixels());
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![n, c_out, geom.in_h, geom.in_w], y)?;
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, geom }, rg))
    }

    /// Per-channel batch normalization of `[N, C, H, W]`. In eval mode the
    /// supplied running statistics replace the batch statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        mode: Mode,
        running: (&[f64], &[f64]),
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("batch_norm")?;
        if self.shape(gamma) != [c] {
            return Err(shape_err("batch_norm gamma", &[c], self.shape(gamma)));
        }
        if self.shape(beta) != [c] {
            return Err(shape_err("batch_norm beta", &[c], self.shape(beta)));
        }
        let hw = h * w;
        let count = (n * hw) as f64;
        let xd = self.value(x).data();
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(TensorError::BatchTooSmall(n));
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().sum::<f64>();
                    }
                    mean[ch] = s / count;
                    let mut ss = 0.0;
                    for b in 0..n {
                        ss += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                            .iter()
                            .map(|v| (v - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                    var[ch] = ss / count;
                }
                let unbiased = var.iter().map(|v| v * count / (count - 1.0)).collect();
                (mean.clone(), var, Some((mean, unbiased)))
            }
            Mode::Eval => {
                if running.0.len() != c || running.1.len() != c {
                    return Err(shape_err("batch_norm running stats", &[c], &[running.0.len()]));
                }
                (running.0.to_vec(), running.1.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                    y[i] = g[ch] * xhat[i] + bt[ch];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = Tensor::new(vec![n, c, h, w], y)?;
        let saved = BatchNormSaved {
            xhat,
            inv_std,
            batch_stats,
        };
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.map(x, |v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(v, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.map(x, f64::tanh);
        let rg = self.rg(x);
        self.push(v, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.map(x, sigmoid);
        let rg = self.rg(x);
        self.push(v, Op::Sigmoid(x), rg)
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::from_fn(t.shape(), |i| f(t.data()[i]))
    }

    /// Affine map `x·Wᵀ + b` with `x: [N, D]`, `W: [O, D]`, `b: [O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = match *self.shape(x) {
            [n, d] => (n, d),
            _ => return Err(shape_err("dense input", &[0, 0], self.shape(x))),
        };
        let o = match *self.shape(w) {
            [o, wd] if wd == d => o,
            _ => return Err(shape_err("dense weight", &[0, d], self.shape(w))),
        };
        if self.shape(b) != [o] {
            return Err(shape_err("dense bias", &[o], self.shape(b)));
        }
        let xd = self.value(x).data();
        let wdata = self.value(w).data();
        let bd = self.value(b).data();
        let mut y = vec![0.0; n * o];
        for i in 0..n {
            let xr = &xd[i * d..(i + 1) * d];
            for j in 0..o {
                let wr = &wdata[j * d..(j + 1) * d];
                y[i * o + j] = bd[j] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::new(vec![n, o], y)?;
        Ok(self.push(value, Op::Dense { x, w, b }, rg))
    }

    /// Concatenates two `[N, C_i, H, W]` tensors along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4("concat")?;
        let (nb, cb, hb, wb) = self.value(b).dims4("concat")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(shape_err("concat", &[n, cb, h, w], self.shape(b)));
        }
        let hw = h * w;
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut y = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            y.extend_from_slice(&ad[i * ca * hw..(i + 1) * ca * hw]);
            y.extend_from_slice(&bd[i * cb * hw..(i + 1) * cb * hw]);
        }
        let rg = self.rg(a) || self.rg(b);
        let value = Tensor::new(vec![n, ca + cb, h, w], y)?;
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        Tensor::from_fn(ta.shape(), |i| f(ta.data()[i], tb.data()[i]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.map(x, |v| v * factor);
        let rg = self.rg(x);
        self.push(v, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean binary cross-entropy (natural log) of probabilities `p` against
    /// 0/1 targets. Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce_loss(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        let t = self.value(p);
        if t.len() != target.len() {
            return Err(shape_err("bce_loss", t.shape(), &[target.len()]));
        }
        let n = t.len() as f64;
        let loss = t
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(p);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_loss", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let loss = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / ta.len() as f64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(loss), Op::L1(a, b), rg))
    }

    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse_loss", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let loss = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / ta.len() as f64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(a, b), rg))
    }

    /// Reverse pass from a scalar `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }

        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if grads[i].is_none() {
                    grads[i] = Some(vec![0.0; node.value.len()]);
                }
                params.push((id, i));
            }
        }
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut send = |v: Var, g: Vec<f64>| {
            if self.nodes[v.0].requires_grad {
                add_into(&mut grads[v.0], g);
            }
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom } => {
                let (n, c, _, _) = self.nodes[x.0].value.dims4("conv2d").unwrap();
                let f = node.value.shape()[1];
                if self.rg(*x) {
                    send(*x, conv::conv_backward_data(dy, val(*w), n, c, f, geom));
                }
                if self.rg(*w) {
                    send(*w, conv::conv_backward_weight(val(*x), dy, n, c, f, geom));
                }
                if let Some(b) = b {
                    send(*b, channel_sums(dy, n, f, geom.out_pixels()));
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                let (n, c_in, _, _) = self.nodes[x.0].value.dims4("conv2d_transpose").unwrap();
                let c_out = node.value.shape()[1];
                if self.rg(*x) {
                    send(*x, conv::conv_forward(dy, val(*w), n, c_out, c_in, geom));
                }
                if self.rg(*w) {
                    send(*w, conv::conv_backward_weight(dy, val(*x), n, c_out, c_in, geom));
                }
                if let Some(b) = b {
                    send(*b, channel_sums(dy, n, c_out, geom.in_pixels()));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            } => {
                let [n, c, h, w] = *node.value.shape() else {
                    unreachable!()
                };
                let hw = h * w;
                let count = (n * hw) as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * hw;
                        for k in base..base + hw {
                            dbeta[ch] += dy[k];
                            dgamma[ch] += dy[k] * saved.xhat[k];
                        }
                    }
                }
                if self.rg(*x) {
                    let g = val(*gamma);
                    let mut dx = vec![0.0; dy.len()];
                    let train = saved.batch_stats.is_some();
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * hw;
                            let scale = g[ch] * saved.inv_std[ch];
                            for k in base..base + hw {
                                dx[k] = if train {
                                    scale
                                        * (dy[k]
                                            - dbeta[ch] / count
                                            - saved.xhat[k] * dgamma[ch] / count)
                                } else {
                                    scale * dy[k]
                                };
                            }
                        }
                    }
                    send(*x, dx);
                }
                send(*gamma, dgamma);
                send(*beta, dbeta);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = val(*x);
                send(
                    *x,
                    dy.iter()
                        .zip(xv)
                        .map(|(g, &v)| if v > 0.0 { *g } else { slope * g })
                        .collect(),
                );
            }
            Op::Tanh(x) => {
                let yv = node.value.data();
                send(*x, dy.iter().zip(yv).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Sigmoid(x) => {
                let yv = node.value.data();
                send(*x, dy.iter().zip(yv).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Dense { x, w, b } => {
                let [n, d] = *self.nodes[x.0].value.shape() else {
                    unreachable!()
                };
                let o = node.value.shape()[1];
                let (xv, wv) = (val(*x), val(*w));
                if self.rg(*x) {
                    let mut dx = vec![0.0; n * d];
                    for r in 0..n {
                        for j in 0..o {
                            let gj = dy[r * o + j];
                            for k in 0..d {
                                dx[r * d + k] += gj * wv[j * d + k];
                            }
                        }
                    }
                    send(*x, dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; o * d];
                    for r in 0..n {
                        for j in 0..o {
                            let gj = dy[r * o + j];
                            for k in 0..d {
                                dw[j * d + k] += gj * xv[r * d + k];
                            }
                        }
                    }
                    send(*w, dw);
                }
                let mut db = vec![0.0; o];
                for r in 0..n {
                    for j in 0..o {
                        db[j] += dy[r * o + j];
                    }
                }
                send(*b, db);
            }
            Op::Concat { a, b } => {
                let [n, c, h, w] = *node.value.shape() else {
                    unreachable!()
                };
                let ca = self.nodes[a.0].value.shape()[1];
                let cb = c - ca;
                let hw = h * w;
                let mut da = Vec::with_capacity(n * ca * hw);
                let mut db = Vec::with_capacity(n * cb * hw);
                for r in 0..n {
                    let base = r * c * hw;
                    da.extend_from_slice(&dy[base..base + ca * hw]);
                    db.extend_from_slice(&dy[base + ca * hw..base + c * hw]);
                }
                send(*a, da);
                send(*b, db);
            }
            Op::Reshape(x) => send(*x, dy.to_vec()),
            Op::Add(a, b) => {
                send(*a, dy.to_vec());
                send(*b, dy.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                send(*a, dy.iter().zip(bv).map(|(g, y)| g * y).collect());
                send(*b, dy.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Scale(x, f) => send(*x, dy.iter().map(|g| g * f).collect()),
            Op::Sum(x) => send(*x, vec![dy[0]; self.nodes[x.0].value.len()]),
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len();
                send(*x, vec![dy[0] / n as f64; n]);
            }
            Op::Bce { p, target } => {
                let pv = val(*p);
                let n = pv.len() as f64;
                send(
                    *p,
                    pv.iter()
                        .zip(target)
                        .map(|(&p, &y)| {
                            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                                0.0
                            } else {
                                -dy[0] * (y / p - (1.0 - y) / (1.0 - p)) / n
                            }
                        })
                        .collect(),
                );
            }
            Op::L1(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let n = av.len() as f64;
                let g: Vec<f64> = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| {
                        let d = x - y;
                        let s = if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        dy[0] * s / n
                    })
                    .collect();
                send(*b, g.iter().map(|v| -v).collect());
                send(*a, g);
            }
            Op::Mse(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let n = av.len() as f64;
                let g: Vec<f64> = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| dy[0] * 2.0 * (x - y) / n)
                    .collect();
                send(*b, g.iter().map(|v| -v).collect());
                send(*a, g);
            }
        }
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], n: usize, ch: usize, pixels: usize) {
    for b in 0..n {
        for c in 0..ch {
            let base = (b * ch + c) * pixels;
            y[base..base + pixels].iter_mut().for_each(|v| *v += bias[c]);
        }
    }
}

fn channel_sums(dy: &[f64], n: usize, ch: usize, pixels: usize) -> Vec<f64> {
    let mut out = vec![0.0; ch];
    for b in 0..n {
        for (c, o) in out.iter_mut().enumerate() {
            let base = (b * ch + c) * pixels;
            *o += dy[base..base + pixels].iter().sum::<f64>();
        }
    }
    out
}
