//! U-Net generator and convolutional discriminator.
//!
//! Encoder stage `e_i` is a 3×3 convolution with padding 1. `e1` keeps the
//! input size; every later stage uses stride 2 along each axis that is still
//! longer than 1, so 36×7 shrinks as 18×4, 9×2, 5×1, 3×1, 2×1, 1×1. Decoder
//! stage `d_i` restores the output size and width of `e_{8-i}` with an
//! explicit transposed-convolution output size and is concatenated with it.
//! A final 3×3 convolution maps `Concat(d7, e1)` to two channels under tanh.

use chanpred_tensor::{BatchNorm2d, Conv2d, ConvTranspose2d, Dense, LayerSpec, Mode, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CpcganError, Result};

pub const KERNEL: (usize, usize) = (3, 3);
pub const PAD: (usize, usize) = (1, 1);
pub const ENCODER_STAGES: usize = 7;
pub const DISCRIMINATOR_STAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub n_base: usize,
    /// `(K, T)` of both input and output grids.
    pub dims: (usize, usize),
    pub leaky_slope: f64,
}

impl NetSpec {
    pub fn new(n_base: usize, dims: (usize, usize)) -> Self {
        Self {
            n_base,
            dims,
            leaky_slope: chanpred_tensor::layers::DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_base == 0 || self.dims.0 == 0 || self.dims.1 == 0 {
            return Err(CpcganError::Config(format!("invalid network spec {self:?}")));
        }
        Ok(())
    }
}

fn conv_out(len: usize, stride: usize) -> usize {
    (len + 2 - 3) / stride + 1
}

/// Stride 2 on axes longer than 1.
fn halving_stride((h, w): (usize, usize)) -> (usize, usize) {
    (if h > 1 { 2 } else { 1 }, if w > 1 { 2 } else { 1 })
}

/// `(stride, output size)` of each encoder stage.
pub fn encoder_schedule(dims: (usize, usize)) -> Vec<((usize, usize), (usize, usize))> {
    let mut hw = dims;
    (0..ENCODER_STAGES)
        .map(|i| {
            let stride = if i == 0 { (1, 1) } else { halving_stride(hw) };
            hw = (conv_out(hw.0, stride.0), conv_out(hw.1, stride.1));
            (stride, hw)
        })
        .collect()
}

pub fn encoder_widths(n: usize) -> [usize; ENCODER_STAGES] {
    [n, 2 * n, 4 * n, 8 * n, 8 * n, 8 * n, 8 * n]
}

/// Train-mode batch-norm outputs of one forward pass, keyed by layer index.
#[derive(Debug, Default)]
pub struct BnTrace(Vec<(usize, Var)>);

fn absorb_all(bns: &mut [&mut BatchNorm2d], tape: &Tape, trace: &BnTrace) {
    for &(i, v) in &trace.0 {
        bns[i].absorb(tape, v);
    }
}

#[derive(Debug, Clone)]
struct EncoderStage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

#[derive(Debug, Clone)]
struct DecoderStage {
    deconv: ConvTranspose2d,
    bn: BatchNorm2d,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub spec: NetSpec,
    pub store: ParamStore,
    encoder: Vec<EncoderStage>,
    decoder: Vec<DecoderStage>,
    head: Conv2d,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let schedule = encoder_schedule(spec.dims);
        let widths = encoder_widths(spec.n_base);

        let mut encoder = Vec::with_capacity(ENCODER_STAGES);
        let mut in_ch = 2;
        for (i, &(stride, _)) in schedule.iter().enumerate() {
            let name = format!("e{}", i + 1);
            let with_bn = i > 0;
            let conv = Conv2d::new(&mut store, &name, in_ch, widths[i], KERNEL, stride, PAD, !with_bn, rng);
            let bn = with_bn.then(|| BatchNorm2d::new(&mut store, &format!("{name}.bn"), widths[i], rng));
            encoder.push(EncoderStage { conv, bn });
            in_ch = widths[i];
        }

        let mut decoder = Vec::with_capacity(ENCODER_STAGES);
        for i in 1..=ENCODER_STAGES {
            let target = ENCODER_STAGES - i;
            let (in_ch, stride) = if i == 1 {
                (widths[ENCODER_STAGES - 1], (1, 1))
            } else {
                (2 * widths[target + 1], schedule[target + 1].0)
            };
            let name = format!("d{i}");
            let deconv = ConvTranspose2d::new(
                &mut store,
                &name,
                in_ch,
                widths[target],
                KERNEL,
                stride,
                PAD,
                schedule[target].1,
                false,
                rng,
            );
            let bn = BatchNorm2d::new(&mut store, &format!("{name}.bn"), widths[target], rng);
            decoder.push(DecoderStage { deconv, bn });
        }
        let head = Conv2d::new(&mut store, "head", 2 * widths[0], 2, KERNEL, (1, 1), PAD, true, rng);
        let g = Self {
            spec,
            store,
            encoder,
            decoder,
            head,
        };
        g.dry_run()?;
        Ok(g)
    }

    fn dry_run(&self) -> Result<()> {
        let mut tape = Tape::new();
        let x = tape.constant(chanpred_tensor::Tensor::zeros(&[1, 2, self.spec.dims.0, self.spec.dims.1]));
        let (y, _) = self.forward(&mut tape, x, Mode::Eval)?;
        if tape.shape(y) != [1, 2, self.spec.dims.0, self.spec.dims.1] {
            return Err(CpcganError::Config(format!("generator output shape {:?}", tape.shape(y))));
        }
        Ok(())
    }

    /// `x: [N, 2, K, T]` → `[N, 2, K, T]` in `[-1, 1]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode) -> Result<(Var, BnTrace)> {
        let slope = self.spec.leaky_slope;
        let mut trace = BnTrace::default();
        let mut skips = Vec::with_capacity(ENCODER_STAGES);
        let mut h = x;
        for (i, stage) in self.encoder.iter().enumerate() {
            h = stage.conv.forward(tape, &self.store, h)?;
            if let Some(bn) = &stage.bn {
                h = bn.forward(tape, &self.store, h, mode)?;
                trace.0.push((i - 1, h));
            }
            h = tape.leaky_relu(h, slope);
            skips.push(h);
        }
        for (i, stage) in self.decoder.iter().enumerate() {
            h = stage.deconv.forward(tape, &self.store, h)?;
            h = stage.bn.forward(tape, &self.store, h, mode)?;
            trace.0.push((ENCODER_STAGES - 1 + i, h));
            h = tape.leaky_relu(h, slope);
            h = tape.concat(h, skips[ENCODER_STAGES - 1 - i])?;
        }
        let y = self.head.forward(tape, &self.store, h)?;
        Ok((tape.tanh(y), trace))
    }

    fn bns_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        self.encoder
            .iter_mut()
            .filter_map(|s| s.bn.as_mut())
            .chain(self.decoder.iter_mut().map(|s| &mut s.bn))
            .collect()
    }

    pub fn bns(&self) -> Vec<&BatchNorm2d> {
        self.encoder
            .iter()
            .filter_map(|s| s.bn.as_ref())
            .chain(self.decoder.iter().map(|s| &s.bn))
            .collect()
    }

    /// Folds the batch statistics of a train-mode pass into running stats.
    pub fn absorb(&mut self, tape: &Tape, trace: &BnTrace) {
        absorb_all(&mut self.bns_mut(), tape, trace);
    }

    pub fn set_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        set_running(&mut self.bns_mut(), stats)
    }

    /// Replaces the running statistics with the population mean and biased
    /// variance over all train-mode batches in `inputs`, weights frozen.
    ///
    /// Momentum averages trail weights that are still moving, and layers
    /// whose batch variance is near zero amplify that lag in eval mode. The
    /// biased variance is what train mode normalizes by; on the tiny late
    /// stages the unbiased one would rescale activations noticeably.
    pub fn recalibrate_bn(&mut self, inputs: &[Tensor]) -> Result<()> {
        if inputs.is_empty() {
            return Ok(());
        }
        let widths: Vec<usize> = self.bns().iter().map(|bn| bn.channels).collect();
        // Per layer: element count, Σx and Σx² per channel.
        type Sums = Vec<(f64, Vec<f64>, Vec<f64>)>;
        let per_batch: Vec<Sums> = inputs
            .par_iter()
            .map(|x| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let (_, trace) = self.forward(&mut tape, xv, Mode::Train)?;
                let mut sums: Sums = widths.iter().map(|&c| (0.0, vec![0.0; c], vec![0.0; c])).collect();
                for &(i, v) in &trace.0 {
                    let shape = tape.shape(v);
                    let n = (shape[0] * shape[2] * shape[3]) as f64;
                    let (mean, var) = tape.batch_stats(v).expect("train-mode node");
                    let (count, s1, s2) = &mut sums[i];
                    *count += n;
                    for c in 0..mean.len() {
                        s1[c] += n * mean[c];
                        s2[c] += (n - 1.0) * var[c] + n * mean[c] * mean[c];
                    }
                }
                Ok(sums)
            })
            .collect::<Result<_>>()?;
        let mut total: Sums = widths.iter().map(|&c| (0.0, vec![0.0; c], vec![0.0; c])).collect();
        for sums in per_batch {
            for ((n, s1, s2), (bn, b1, b2)) in total.iter_mut().zip(sums) {
                *n += bn;
                s1.iter_mut().zip(&b1).for_each(|(a, b)| *a += b);
                s2.iter_mut().zip(&b2).for_each(|(a, b)| *a += b);
            }
        }
        let stats: Vec<(Vec<f64>, Vec<f64>)> = total
            .into_iter()
            .map(|(n, s1, s2)| {
                let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
                let var = s2
                    .iter()
                    .zip(&mean)
                    .map(|(s, m)| (s / n - m * m).max(0.0))
                    .collect();
                (mean, var)
            })
            .collect();
        self.set_running_stats(&stats)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let act = LayerSpec::LeakyRelu {
            slope: self.spec.leaky_slope,
        };
        let mut out = Vec::new();
        for s in &self.encoder {
            out.push(s.conv.spec());
            if let Some(bn) = &s.bn {
                out.push(bn.spec());
            }
            out.push(act.clone());
        }
        for s in &self.decoder {
            out.extend([s.deconv.spec(), s.bn.spec(), act.clone(), LayerSpec::Concat]);
        }
        out.extend([self.head.spec(), LayerSpec::Tanh]);
        out
    }
}

fn set_running(bns: &mut [&mut BatchNorm2d], stats: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    if bns.len() != stats.len() {
        return Err(CpcganError::Checkpoint(format!(
            "expected {} batch-norm layers, got {}",
            bns.len(),
            stats.len()
        )));
    }
    for (bn, (m, v)) in bns.iter_mut().zip(stats) {
        if m.len() != bn.channels || v.len() != bn.channels {
            return Err(CpcganError::Checkpoint("running-stat width mismatch".into()));
        }
        bn.running_mean.clone_from(m);
        bn.running_var.clone_from(v);
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct DiscStage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

/// Scores a `[UL ‖ DL]` pair: four stride-2 convolutions of widths n, 2n,
/// 4n, 8n, then a dense layer to one logit and a sigmoid.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub spec: NetSpec,
    pub store: ParamStore,
    stages: Vec<DiscStage>,
    dense: Dense,
    flat: usize,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut hw = spec.dims;
        let mut in_ch = 4;
        let mut stages = Vec::with_capacity(DISCRIMINATOR_STAGES);
        for i in 0..DISCRIMINATOR_STAGES {
            let width = spec.n_base << i;
            let stride = halving_stride(hw);
            let name = format!("c{}", i + 1);
            let with_bn = i > 0;
            let conv = Conv2d::new(&mut store, &name, in_ch, width, KERNEL, stride, PAD, !with_bn, rng);
            let bn = with_bn.then(|| BatchNorm2d::new(&mut store, &format!("{name}.bn"), width, rng));
            stages.push(DiscStage { conv, bn });
            hw = (conv_out(hw.0, stride.0), conv_out(hw.1, stride.1));
            in_ch = width;
        }
        let flat = in_ch * hw.0 * hw.1;
        let dense = Dense::new(&mut store, "fc", flat, 1, rng);
        Ok(Self {
            spec,
            store,
            stages,
            dense,
            flat,
        })
    }

    /// Probabilities `[N, 1]` that each `(ul, dl)` pair is real.
    pub fn forward(&self, tape: &mut Tape, ul: Var, dl: Var, mode: Mode) -> Result<(Var, BnTrace)> {
        let slope = self.spec.leaky_slope;
        let mut trace = BnTrace::default();
        let n = tape.shape(ul)[0];
        let mut h = tape.concat(ul, dl)?;
        for (i, s) in self.stages.iter().enumerate() {
            h = s.conv.forward(tape, &self.store, h)?;
            if let Some(bn) = &s.bn {
                h = bn.forward(tape, &self.store, h, mode)?;
                trace.0.push((i - 1, h));
            }
            h = tape.leaky_relu(h, slope);
        }
        let h = tape.reshape(h, &[n, self.flat])?;
        let logit = self.dense.forward(tape, &self.store, h)?;
        Ok((tape.sigmoid(logit), trace))
    }

    fn bns_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        self.stages.iter_mut().filter_map(|s| s.bn.as_mut()).collect()
    }

    pub fn bns(&self) -> Vec<&BatchNorm2d> {
        self.stages.iter().filter_map(|s| s.bn.as_ref()).collect()
    }

    pub fn absorb(&mut self, tape: &Tape, trace: &BnTrace) {
        absorb_all(&mut self.bns_mut(), tape, trace);
    }

    pub fn set_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        set_running(&mut self.bns_mut(), stats)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut out = vec![LayerSpec::Concat];
        for s in &self.stages {
            out.push(s.conv.spec());
            if let Some(bn) = &s.bn {
                out.push(bn.spec());
            }
            out.push(LayerSpec::LeakyRelu {
                slope: self.spec.leaky_slope,
            });
        }
        out.extend([self.dense.spec(), LayerSpec::Sigmoid]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_for_default_grid() {
        let sizes: Vec<_> = encoder_schedule((36, 7)).into_iter().map(|(_, hw)| hw).collect();
        assert_eq!(sizes, vec![(36, 7), (18, 4), (9, 2), (5, 1), (3, 1), (2, 1), (1, 1)]);
        let strides: Vec<_> = encoder_schedule((36, 7)).into_iter().map(|(s, _)| s).collect();
        assert_eq!(strides[0], (1, 1));
        assert_eq!(strides[4], (2, 1));
    }

    #[test]
    fn widths_follow_doubling_then_plateau() {
        assert_eq!(encoder_widths(64), [64, 128, 256, 512, 512, 512, 512]);
    }
}
