//! Training snapshots and their on-disk form.
//!
//! Tensors are stored under prefixed names: `g/` and `d/` for network
//! parameters, `g/bn{i}.running_mean|var` for batch-norm statistics and
//! `adam_g/m{i}`, `adam_g/v{i}` (likewise `adam_d/`) for optimizer moments.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use chanpred_core::dataset::NormalizationStats;
use chanpred_core::metrics::MetricSummary;
use chanpred_tensor::checkpoint::{read_checkpoint, write_checkpoint, CheckpointData};
use chanpred_tensor::{Adam, LayerSpec, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use chanpred_tensor::BatchNorm2d;

use crate::error::{CpcganError, Result};
use crate::networks::{Discriminator, Generator, NetSpec};
use crate::train::{Method, TrainConfig};

pub const FORMAT: &str = "chanpred-checkpoint";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub method: Method,
    pub config: TrainConfig,
    /// Batch counter at which the snapshot was taken.
    pub counter: u64,
    pub criterion: String,
    pub score: f64,
    pub metrics: Option<MetricSummary>,
    pub normalization: NormalizationStats,
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub adam_g: Option<Adam>,
    pub adam_d: Option<Adam>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    method: Method,
    config: TrainConfig,
    counter: u64,
    criterion: String,
    score: f64,
    metrics: Option<MetricSummary>,
    normalization: NormalizationStats,
    generator: NetSpec,
    generator_layers: Vec<LayerSpec>,
    discriminator: Option<NetSpec>,
    discriminator_layers: Option<Vec<LayerSpec>>,
    adam_g_steps: Option<u64>,
    adam_d_steps: Option<u64>,
}

fn push_store(out: &mut Vec<(String, Tensor)>, prefix: &str, store: &ParamStore) {
    for (name, t) in store.named_tensors() {
        out.push((format!("{prefix}/{name}"), t.clone()));
    }
}

fn push_bns(out: &mut Vec<(String, Tensor)>, prefix: &str, bns: &[&BatchNorm2d]) {
    for (i, bn) in bns.iter().enumerate() {
        let c = bn.channels;
        out.push((format!("{prefix}/bn{i}.running_mean"), Tensor::new(vec![c], bn.running_mean.clone()).expect("len c")));
        out.push((format!("{prefix}/bn{i}.running_var"), Tensor::new(vec![c], bn.running_var.clone()).expect("len c")));
    }
}

fn push_adam(out: &mut Vec<(String, Tensor)>, prefix: &str, adam: &Adam) {
    let (m, v) = adam.moments();
    for (i, (m, v)) in m.iter().zip(v).enumerate() {
        out.push((format!("{prefix}/m{i}"), Tensor::new(vec![m.len()], m.clone()).expect("flat")));
        out.push((format!("{prefix}/v{i}"), Tensor::new(vec![v.len()], v.clone()).expect("flat")));
    }
}

fn fill_store(data: &mut CheckpointData, prefix: &str, store: &mut ParamStore) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = format!("{prefix}/{}", store.name(id));
        let t = data.take(&name)?;
        if t.shape() != store.value(id).shape() {
            return Err(CpcganError::Checkpoint(format!(
                "{name}: stored shape {:?}, network expects {:?}",
                t.shape(),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = t;
    }
    Ok(())
}

fn take_bns(data: &mut CheckpointData, prefix: &str, count: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    (0..count)
        .map(|i| {
            let m = data.take(&format!("{prefix}/bn{i}.running_mean"))?.into_data();
            let v = data.take(&format!("{prefix}/bn{i}.running_var"))?.into_data();
            Ok((m, v))
        })
        .collect()
}

fn take_adam(data: &mut CheckpointData, prefix: &str, store: &ParamStore, steps: u64, cfg: &TrainConfig) -> Result<Adam> {
    let mut adam = Adam::new(cfg.adam(), store);
    let n = store.len();
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        m.push(data.take(&format!("{prefix}/m{i}"))?.into_data());
        v.push(data.take(&format!("{prefix}/v{i}"))?.into_data());
    }
    adam.restore(m, v, steps);
    Ok(adam)
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Meta {
            format: FORMAT.into(),
            method: self.method,
            config: self.config.clone(),
            counter: self.counter,
            criterion: self.criterion.clone(),
            score: self.score,
            metrics: self.metrics,
            normalization: self.normalization,
            generator: self.generator.spec,
            generator_layers: self.generator.layer_specs(),
            discriminator: self.discriminator.as_ref().map(|d| d.spec),
            discriminator_layers: self.discriminator.as_ref().map(|d| d.layer_specs()),
            adam_g_steps: self.adam_g.as_ref().map(|a| a.step_count()),
            adam_d_steps: self.adam_d.as_ref().map(|a| a.step_count()),
        };
        let mut tensors = Vec::new();
        push_store(&mut tensors, "g", &self.generator.store);
        push_bns(&mut tensors, "g", &self.generator.bns());
        if let Some(d) = &self.discriminator {
            push_store(&mut tensors, "d", &d.store);
            push_bns(&mut tensors, "d", &d.bns());
        }
        if let Some(a) = &self.adam_g {
            push_adam(&mut tensors, "adam_g", a);
        }
        if let Some(a) = &self.adam_d {
            push_adam(&mut tensors, "adam_d", a);
        }
        let refs: Vec<(String, &Tensor)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        let w = BufWriter::new(File::create(path)?);
        write_checkpoint(w, serde_json::to_value(&meta)?, &refs)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut data = read_checkpoint(BufReader::new(File::open(path)?))?;
        let meta: Meta = serde_json::from_value(data.meta.clone())?;
        if meta.format != FORMAT {
            return Err(CpcganError::Checkpoint(format!("unknown format {:?}", meta.format)));
        }
        // Weights are overwritten below; the RNG only shapes the build.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::new(meta.generator, &mut rng)?;
        fill_store(&mut data, "g", &mut generator.store)?;
        let stats = take_bns(&mut data, "g", generator.bns().len())?;
        generator.set_running_stats(&stats)?;
        let discriminator = match meta.discriminator {
            Some(spec) => {
                let mut d = Discriminator::new(spec, &mut rng)?;
                fill_store(&mut data, "d", &mut d.store)?;
                let stats = take_bns(&mut data, "d", d.bns().len())?;
                d.set_running_stats(&stats)?;
                Some(d)
            }
            None => None,
        };
        let adam_g = match meta.adam_g_steps {
            Some(steps) => Some(take_adam(&mut data, "adam_g", &generator.store, steps, &meta.config)?),
            None => None,
        };
        let adam_d = match (meta.adam_d_steps, &discriminator) {
            (Some(steps), Some(d)) => Some(take_adam(&mut data, "adam_d", &d.store, steps, &meta.config)?),
            _ => None,
        };
        if let Some((name, _)) = data.tensors.first() {
            return Err(CpcganError::Checkpoint(format!("unexpected tensor {name:?}")));
        }
        Ok(Self {
            method: meta.method,
            config: meta.config,
            counter: meta.counter,
            criterion: meta.criterion,
            score: meta.score,
            metrics: meta.metrics,
            normalization: meta.normalization,
            generator,
            discriminator,
            adam_g,
            adam_d,
        })
    }
}
