//! Parameterized layers built on [`Tape`] ops.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian used for conv/dense weights and for
/// the batch-norm scale around 1.
pub const INIT_STD: f64 = 0.02;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Serializable description of one layer, recorded in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        bias: bool,
    },
    ConvTranspose {
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        output_size: (usize, usize),
        bias: bool,
    },
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Sigmoid,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Concat,
}

fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], mean: f64, std: f64) -> Tensor {
    let dist = Normal::new(mean, std).expect("finite std");
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = normal_tensor(rng, &[out_ch, in_ch, kernel.0, kernel.1], 0.0, INIT_STD);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch])));
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            weight,
            bias,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv2d(x, w, b, self.stride, self.pad)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            bias: self.bias.is_some(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub output_size: (usize, usize),
    weight: ParamId,
    bias: Option<ParamId>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        output_size: (usize, usize),
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = normal_tensor(rng, &[in_ch, out_ch, kernel.0, kernel.1], 0.0, INIT_STD);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch])));
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            output_size,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv2d_transpose(x, w, b, self.stride, self.pad, self.output_size)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::ConvTranspose {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            output_size: self.output_size,
            bias: self.bias.is_some(),
        }
    }
}

/// Batch normalization over `[N, C, H, W]` with running statistics for
/// eval mode.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    gamma: ParamId,
    beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            normal_tensor(rng, &[channels], 1.0, INIT_STD),
        );
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma,
            beta,
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn gamma(&self) -> ParamId {
        self.gamma
    }

    pub fn beta(&self) -> ParamId {
        self.beta
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.batch_norm(
            x,
            g,
            b,
            self.eps,
            mode,
            (&self.running_mean, &self.running_var),
        )
    }

    /// Folds the batch statistics seen by the train-mode node `out` into the
    /// running estimates. No-op for eval-mode nodes.
    pub fn absorb(&mut self, tape: &Tape, out: Var) {
        if let Some((mean, var)) = tape.batch_stats(out) {
            let m = self.momentum;
            for c in 0..self.channels {
                self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
                self.running_var[c] = (1.0 - m) * self.running_var[c] + m * var[c];
            }
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm {
            channels: self.channels,
            eps: self.eps,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Self {
        let w = normal_tensor(rng, &[out_features, in_features], 0.0, INIT_STD);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        Self {
            in_features,
            out_features,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.dense(x, w, b)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            in_features: self.in_features,
            out_features: self.out_features,
        }
    }
}
