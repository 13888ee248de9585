use chanpred_core::dataset::NormalizationStats;
use chanpred_core::metrics::nmse_h;
use chanpred_core::{Band, CsiMatrix, Predictor};
use chanpred_tensor::{Mode, Tape, Tensor};
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::error::{CpcganError, Result};
use crate::networks::Generator;

const BATCH: usize = 64;

/// Eval-mode generator wrapped with its normalization range.
#[derive(Debug, Clone)]
pub struct GanPredictor {
    name: String,
    generator: Generator,
    stats: NormalizationStats,
}

impl GanPredictor {
    pub fn new(name: impl Into<String>, generator: Generator, stats: NormalizationStats) -> Self {
        Self {
            name: name.into(),
            generator,
            stats,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        Self::new(ckpt.method.name(), ckpt.generator.clone(), ckpt.normalization)
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    fn run(&self, inputs: &[&CsiMatrix]) -> chanpred_core::Result<Vec<CsiMatrix>> {
        let dims = self.generator.spec.dims;
        let per = 2 * dims.0 * dims.1;
        let mut data = Vec::with_capacity(inputs.len() * per);
        for m in inputs {
            if m.dims() != dims {
                return Err(chanpred_core::Error::Shape {
                    expected: dims,
                    actual: m.dims(),
                });
            }
            data.extend(self.stats.normalize_matrix(m));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![inputs.len(), 2, dims.0, dims.1], data).expect("sized above"));
        let (y, _) = self
            .generator
            .forward(&mut tape, x, Mode::Eval)
            .map_err(|e| chanpred_core::Error::Config(e.to_string()))?;
        tape.value(y)
            .data()
            .chunks_exact(per)
            .map(|v| self.stats.denormalize_matrix(v, dims, Band::Dl))
            .collect()
    }
}

impl Predictor for GanPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn dl_dims(&self) -> (usize, usize) {
        self.generator.spec.dims
    }

    fn predict(&self, h_ul: &CsiMatrix) -> chanpred_core::Result<CsiMatrix> {
        Ok(self.run(&[h_ul])?.remove(0))
    }

    fn predict_batch(&self, h_ul: &[&CsiMatrix]) -> chanpred_core::Result<Vec<CsiMatrix>> {
        let parts: Vec<Vec<CsiMatrix>> = h_ul.par_chunks(BATCH).map(|c| self.run(c)).collect::<chanpred_core::Result<_>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

fn check_rectangular<T>(links: &[Vec<T>]) -> Result<(usize, usize)> {
    let n_r = links.len();
    let n_t = links.first().map_or(0, Vec::len);
    if n_r == 0 || n_t == 0 || links.iter().any(|row| row.len() != n_t) {
        return Err(CpcganError::Config("MIMO links must form a non-empty N_R × N_T grid".into()));
    }
    Ok((n_r, n_t))
}

/// Predicts each Tx-Rx link independently; `links[r][t]` is the UL grid of
/// receive antenna `r` and transmit antenna `t`.
pub fn predict_mimo(predictor: &dyn Predictor, links: &[Vec<CsiMatrix>]) -> Result<Vec<Vec<CsiMatrix>>> {
    let (_, n_t) = check_rectangular(links)?;
    let flat: Vec<&CsiMatrix> = links.iter().flatten().collect();
    let pred = predictor.predict_batch(&flat)?;
    Ok(pred.chunks(n_t).map(<[CsiMatrix]>::to_vec).collect())
}

/// Per-link `nmse_h` and their mean.
pub fn mimo_nmse_h(truth: &[Vec<CsiMatrix>], pred: &[Vec<CsiMatrix>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let shape = check_rectangular(truth)?;
    if check_rectangular(pred)? != shape {
        return Err(CpcganError::Config("prediction grid does not match link grid".into()));
    }
    let per: Vec<Vec<f64>> = truth
        .iter()
        .zip(pred)
        .map(|(tr, pr)| tr.iter().zip(pr).map(|(t, p)| nmse_h(t, p)).collect::<chanpred_core::Result<_>>())
        .collect::<chanpred_core::Result<_>>()?;
    let n = (shape.0 * shape.1) as f64;
    let mean = per.iter().flatten().sum::<f64>() / n;
    Ok((per, mean))
}
