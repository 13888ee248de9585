//! Adversarial training with CPError-based generator selection, and the
//! MSE/L1-trained CNN baseline sharing the same generator.
//!
//! Per batch the adversarial trainer takes one discriminator Adam step on
//! `bce(D(ul, dl), 1) + bce(D(ul, G(ul)), 0)` with `G(ul)` detached, then
//! `g_updates_per_d` generator Adam steps on
//! `bce(D(ul, G(ul)), 1) + λ1·L1(G(ul), dl)`, each with a fresh forward
//! pass. Every `val_interval_batches` batches the generator's batch-norm
//! statistics are recomputed over the training set, it is scored on the
//! denormalized validation set and the best snapshot is kept.

use std::io::Write;

use chanpred_core::dataset::{CsiSample, NormalizationStats};
use chanpred_core::metrics::{evaluate, MetricSummary};
use chanpred_core::{Band, CsiMatrix};
use chanpred_tensor::{Adam, AdamConfig, Mode, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{CpcganError, Result};
use crate::networks::{Discriminator, Generator, NetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CnnLoss {
    Mse,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Method {
    Cpcgan,
    Cnn { loss: CnnLoss },
}

impl Method {
    pub const CNN: Method = Method::Cnn { loss: CnnLoss::Mse };

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cpcgan => "cpcgan",
            Method::Cnn { .. } => "cnn",
        }
    }

    /// Validation quantity minimized by checkpoint selection.
    pub fn criterion(&self) -> &'static str {
        match self {
            Method::Cpcgan => "cp_error",
            Method::Cnn { .. } => "nmse_h",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub n_base: usize,
    pub g_updates_per_d: usize,
    pub val_interval_batches: u64,
    pub epochs: usize,
    pub seed: u64,
    /// Stops after this many batches when set.
    pub max_batches: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda1: 100.0,
            lambda2: 1.0,
            batch_size: 32,
            n_base: 64,
            g_updates_per_d: 2,
            val_interval_batches: 100,
            epochs: 20,
            seed: 0,
            max_batches: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.lambda1, self.lambda2];
        if positive.iter().any(|v| !v.is_finite() || *v < 0.0) || self.lr == 0.0 {
            return Err(CpcganError::Config("learning rate, betas and lambdas must be finite and >= 0".into()));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(CpcganError::Config("betas must be < 1".into()));
        }
        if self.batch_size < 2 {
            return Err(CpcganError::Config("batch_size must be >= 2 for batch normalization".into()));
        }
        if self.n_base == 0 || self.g_updates_per_d == 0 || self.val_interval_batches == 0 || self.epochs == 0 {
            return Err(CpcganError::Config(
                "n_base, g_updates_per_d, val_interval_batches and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// `bce(p_real, 1) + bce(p_fake, 0)`.
pub fn d_loss(tape: &mut Tape, p_real: Var, p_fake: Var) -> Result<Var> {
    let n = tape.value(p_real).len();
    let real = tape.bce_loss(p_real, &vec![1.0; n])?;
    let fake = tape.bce_loss(p_fake, &vec![0.0; tape.value(p_fake).len()])?;
    Ok(tape.add(real, fake)?)
}

/// Non-saturating adversarial term plus `λ1·L1`. Returns `(total, L1)`.
pub fn g_loss(tape: &mut Tape, p_fake: Var, fake: Var, real: Var, lambda1: f64) -> Result<(Var, Var)> {
    let n = tape.value(p_fake).len();
    let adv = tape.bce_loss(p_fake, &vec![1.0; n])?;
    let l1 = tape.l1_loss(fake, real)?;
    let weighted = tape.scale(l1, lambda1);
    Ok((tape.add(adv, weighted)?, l1))
}

/// Normalized two-channel tensors of a sample list.
#[derive(Debug, Clone)]
pub struct TensorSet {
    pub dims: (usize, usize),
    pub ul: Vec<Vec<f64>>,
    pub dl: Vec<Vec<f64>>,
}

impl TensorSet {
    pub fn new(samples: &[CsiSample], stats: &NormalizationStats) -> Result<Self> {
        let first = samples.first().ok_or(chanpred_core::Error::Empty("sample set"))?;
        let dims = first.h_ul.dims();
        for s in samples {
            if s.h_ul.dims() != dims || s.h_dl.dims() != dims {
                return Err(CpcganError::Config(format!(
                    "UL and DL grids must share one shape {dims:?}; got {:?} and {:?}",
                    s.h_ul.dims(),
                    s.h_dl.dims()
                )));
            }
        }
        Ok(Self {
            dims,
            ul: samples.iter().map(|s| stats.normalize_matrix(&s.h_ul)).collect(),
            dl: samples.iter().map(|s| stats.normalize_matrix(&s.h_dl)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ul.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ul.is_empty()
    }

    /// `[N, 2, K, T]` UL and DL batches for `indices`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let shape = [indices.len(), 2, self.dims.0, self.dims.1];
        let gather = |src: &[Vec<f64>]| {
            let data: Vec<f64> = indices.iter().flat_map(|&i| src[i].iter().copied()).collect();
            Tensor::new(shape.to_vec(), data).expect("consistent batch shape")
        };
        (gather(&self.ul), gather(&self.dl))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Batch {
        counter: u64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        d_loss: Option<f64>,
        g_loss: f64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        l1_term: Option<f64>,
        d_adam_steps: u64,
        g_adam_steps: u64,
    },
    Score {
        counter: u64,
        nmse_h: f64,
        nmse_p: f64,
        cp_error: f64,
        criterion: String,
        score: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub counter: u64,
    pub metrics: MetricSummary,
    pub score: f64,
}

/// Networks and optimizer state of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub method: Method,
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub adam_g: Adam,
    pub adam_d: Option<Adam>,
    pub counter: u64,
}

fn check_finite(v: f64, counter: u64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CpcganError::NonFinite { counter, what })
    }
}

impl Trainer {
    /// The generator is initialized first from `cfg.seed`, so both methods
    /// start from identical generator weights.
    pub fn new(method: Method, cfg: &TrainConfig, dims: (usize, usize)) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let spec = NetSpec::new(cfg.n_base, dims);
        let generator = Generator::new(spec, &mut rng)?;
        let discriminator = match method {
            Method::Cpcgan => Some(Discriminator::new(spec, &mut rng)?),
            Method::Cnn { .. } => None,
        };
        let adam_g = Adam::new(cfg.adam(), &generator.store);
        let adam_d = discriminator.as_ref().map(|d| Adam::new(cfg.adam(), &d.store));
        Ok(Self {
            method,
            cfg: cfg.clone(),
            generator,
            discriminator,
            adam_g,
            adam_d,
            counter: 0,
        })
    }

    fn disc(&self) -> Result<&Discriminator> {
        self.discriminator
            .as_ref()
            .ok_or_else(|| CpcganError::Config("method has no discriminator".into()))
    }

    /// One discriminator update. Returns its loss.
    pub fn d_step(&mut self, ul: &Tensor, dl: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(ul.clone());
        let real = tape.constant(dl.clone());
        let (fake, g_trace) = self.generator.forward(&mut tape, x, Mode::Train)?;
        let fake = tape.detach(fake);
        let d = self.disc()?;
        let (p_real, tr_real) = d.forward(&mut tape, x, real, Mode::Train)?;
        let (p_fake, tr_fake) = d.forward(&mut tape, x, fake, Mode::Train)?;
        let loss = d_loss(&mut tape, p_real, p_fake)?;
        let value = check_finite(tape.value(loss).data()[0], self.counter, "discriminator loss")?;
        let grads = tape.backward(loss)?;
        self.generator.absorb(&tape, &g_trace);
        let d = self.discriminator.as_mut().expect("checked above");
        d.absorb(&tape, &tr_real);
        d.absorb(&tape, &tr_fake);
        d.store.zero_grad();
        d.store.accumulate(&grads);
        self.adam_d.as_mut().expect("paired with discriminator").step(&mut d.store);
        Ok(value)
    }

    /// One adversarial generator update. Returns `(g_loss, L1)`.
    pub fn g_step(&mut self, ul: &Tensor, dl: &Tensor) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let x = tape.constant(ul.clone());
        let real = tape.constant(dl.clone());
        let (fake, g_trace) = self.generator.forward(&mut tape, x, Mode::Train)?;
        let (p_fake, d_trace) = self.disc()?.forward(&mut tape, x, fake, Mode::Train)?;
        let (loss, l1) = g_loss(&mut tape, p_fake, fake, real, self.cfg.lambda1)?;
        let value = check_finite(tape.value(loss).data()[0], self.counter, "generator loss")?;
        let l1 = tape.value(l1).data()[0];
        let grads = tape.backward(loss)?;
        self.generator.absorb(&tape, &g_trace);
        self.discriminator.as_mut().expect("checked above").absorb(&tape, &d_trace);
        self.generator.store.zero_grad();
        self.generator.store.accumulate(&grads);
        self.adam_g.step(&mut self.generator.store);
        Ok((value, l1))
    }

    /// One supervised generator update on the CNN loss. Returns the loss.
    pub fn cnn_step(&mut self, ul: &Tensor, dl: &Tensor, loss_kind: CnnLoss) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(ul.clone());
        let real = tape.constant(dl.clone());
        let (fake, g_trace) = self.generator.forward(&mut tape, x, Mode::Train)?;
        let loss = match loss_kind {
            CnnLoss::Mse => tape.mse_loss(fake, real)?,
            CnnLoss::L1 => tape.l1_loss(fake, real)?,
        };
        let value = check_finite(tape.value(loss).data()[0], self.counter, "generator loss")?;
        let grads = tape.backward(loss)?;
        self.generator.absorb(&tape, &g_trace);
        self.generator.store.zero_grad();
        self.generator.store.accumulate(&grads);
        self.adam_g.step(&mut self.generator.store);
        Ok(value)
    }

    /// All updates for one batch; advances the batch counter.
    pub fn train_batch(&mut self, ul: &Tensor, dl: &Tensor) -> Result<LogRecord> {
        let (d, g, l1) = match self.method {
            Method::Cpcgan => {
                let d = self.d_step(ul, dl)?;
                let mut last = (0.0, 0.0);
                for _ in 0..self.cfg.g_updates_per_d {
                    last = self.g_step(ul, dl)?;
                }
                (Some(d), last.0, Some(last.1))
            }
            Method::Cnn { loss } => {
                let v = self.cnn_step(ul, dl, loss)?;
                let l1 = (loss == CnnLoss::L1).then_some(v);
                (None, v, l1)
            }
        };
        self.counter += 1;
        Ok(LogRecord::Batch {
            counter: self.counter,
            d_loss: d,
            g_loss: g,
            l1_term: l1,
            d_adam_steps: self.adam_d.as_ref().map_or(0, |a| a.step_count()),
            g_adam_steps: self.adam_g.step_count(),
        })
    }

    pub fn snapshot(&self, score: ScoreRecord, stats: NormalizationStats) -> Checkpoint {
        Checkpoint {
            method: self.method,
            config: self.cfg.clone(),
            counter: self.counter,
            criterion: self.method.criterion().to_string(),
            score: score.score,
            metrics: Some(score.metrics),
            normalization: stats,
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            adam_g: Some(self.adam_g.clone()),
            adam_d: self.adam_d.clone(),
        }
    }
}

const EVAL_CHUNK: usize = 64;

/// Eval-mode generator outputs, denormalized.
pub fn generate_dl(generator: &Generator, set: &TensorSet, stats: &NormalizationStats) -> Result<Vec<CsiMatrix>> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let chunks: Vec<Vec<CsiMatrix>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|idx| {
            let (ul, _) = set.batch(idx);
            let mut tape = Tape::new();
            let x = tape.constant(ul);
            let (y, _) = generator.forward(&mut tape, x, Mode::Eval)?;
            let per = 2 * set.dims.0 * set.dims.1;
            tape.value(y)
                .data()
                .chunks_exact(per)
                .map(|v| Ok(stats.denormalize_matrix(v, set.dims, Band::Dl)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn score_generator(
    generator: &Generator,
    val: &[CsiSample],
    val_set: &TensorSet,
    stats: &NormalizationStats,
    lambda2: f64,
) -> Result<MetricSummary> {
    let pred = generate_dl(generator, val_set, stats)?;
    let truth: Vec<&CsiMatrix> = val.iter().map(|s| &s.h_dl).collect();
    let rows = evaluate(&truth, &pred, lambda2, 0)?;
    Ok(MetricSummary::from_rows(&rows)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub best: Checkpoint,
    pub scores: Vec<ScoreRecord>,
    pub log: Vec<LogRecord>,
    pub batches: u64,
}

fn emit(record: LogRecord, log: &mut Vec<LogRecord>, sink: &mut Option<&mut dyn Write>) -> Result<()> {
    if let Some(w) = sink {
        serde_json::to_writer(&mut **w, &record)?;
        w.write_all(b"\n")?;
    }
    log.push(record);
    Ok(())
}

/// Trains with `method`, normalizing with a range fitted on `train` only,
/// and returns the scored snapshot with the smallest selection criterion.
pub fn train(
    train: &[CsiSample],
    val: &[CsiSample],
    cfg: &TrainConfig,
    method: Method,
    mut sink: Option<&mut dyn Write>,
) -> Result<TrainOutput> {
    if train.is_empty() || val.is_empty() {
        return Err(CpcganError::Core(chanpred_core::Error::Empty("training or validation set")));
    }
    let stats = NormalizationStats::fit_samples(train)?;
    let train_set = TensorSet::new(train, &stats)?;
    let val_set = TensorSet::new(val, &stats)?;
    if val_set.dims != train_set.dims {
        return Err(CpcganError::Config("validation grid shape differs from training".into()));
    }
    let mut trainer = Trainer::new(method, cfg, train_set.dims)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);

    let mut log = Vec::new();
    let mut scores: Vec<ScoreRecord> = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let calibration: Vec<Tensor> = order
        .chunks(cfg.batch_size)
        .filter(|idx| idx.len() >= 2)
        .map(|idx| train_set.batch(idx).0)
        .collect();

    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            if cfg.max_batches.is_some_and(|m| trainer.counter >= m) {
                break 'epochs;
            }
            let (ul, dl) = train_set.batch(idx);
            let record = trainer.train_batch(&ul, &dl)?;
            emit(record, &mut log, &mut sink)?;

            if trainer.counter % cfg.val_interval_batches == 0 {
                trainer.generator.recalibrate_bn(&calibration)?;
                let metrics = score_generator(&trainer.generator, val, &val_set, &stats, cfg.lambda2)?;
                let score = match method {
                    Method::Cpcgan => metrics.cp_error,
                    Method::Cnn { .. } => metrics.nmse_h,
                };
                let rec = ScoreRecord {
                    counter: trainer.counter,
                    metrics,
                    score: check_finite(score, trainer.counter, "validation score")?,
                };
                emit(
                    LogRecord::Score {
                        counter: rec.counter,
                        nmse_h: metrics.nmse_h,
                        nmse_p: metrics.nmse_p,
                        cp_error: metrics.cp_error,
                        criterion: method.criterion().to_string(),
                        score,
                    },
                    &mut log,
                    &mut sink,
                )?;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(trainer.snapshot(rec, stats));
                }
                scores.push(rec);
            }
        }
    }

    let batches = trainer.counter;
    let best = best.ok_or(CpcganError::NoScoredCheckpoint {
        interval: cfg.val_interval_batches,
        ran: batches,
    })?;
    Ok(TrainOutput {
        best,
        scores,
        log,
        batches,
    })
}

/// [`train`] with the CNN baseline method.
pub fn train_cnn_baseline(
    train_samples: &[CsiSample],
    val: &[CsiSample],
    cfg: &TrainConfig,
    loss: CnnLoss,
    sink: Option<&mut dyn Write>,
) -> Result<TrainOutput> {
    train(train_samples, val, cfg, Method::Cnn { loss }, sink)
}
