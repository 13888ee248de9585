//! The five subcommands. Each reads its inputs, writes its artifacts through
//! [`Outputs`] and returns a short human-readable summary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chanpred_core::dataset::{generate, Dataset, NormalizationStats};
use chanpred_core::linklevel::{ber_curve, write_ber_csv, BerPoint};
use chanpred_core::lmmse::{LmmseModel, LmmseOptions};
use chanpred_core::metrics::{evaluate, MetricRow, MetricSummary};
use chanpred_core::predictor::{StaleUl, Zero};
use chanpred_core::{CsiMatrix, Predictor};
use chanpred_cpcgan::{train, Checkpoint, CnnLoss, GanPredictor, Method};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Cpcgan,
    Cnn,
    Lmmse,
    #[value(name = "stale_ul")]
    StaleUl,
    Zero,
}

impl MethodArg {
    pub fn name(self) -> &'static str {
        match self {
            MethodArg::Cpcgan => "cpcgan",
            MethodArg::Cnn => "cnn",
            MethodArg::Lmmse => "lmmse",
            MethodArg::StaleUl => "stale_ul",
            MethodArg::Zero => "zero",
        }
    }

    /// Artifact written by `train` and read by default by `eval`.
    pub fn model_file(self) -> Option<&'static str> {
        match self {
            MethodArg::Cpcgan => Some("cpcgan.ckpt"),
            MethodArg::Cnn => Some("cnn.ckpt"),
            MethodArg::Lmmse => Some("lmmse.bin"),
            MethodArg::StaleUl | MethodArg::Zero => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl SplitArg {
    pub fn file(self) -> &'static str {
        match self {
            SplitArg::Train => "train.csid",
            SplitArg::Val => "val.csid",
            SplitArg::Test => "test.csid",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
        }
    }
}

/// Generates the configured dataset at `speed_mps` and splits it. All three
/// parts carry the training split's normalization range.
pub fn make_splits(cfg: &ExperimentConfig, speed_mps: f64) -> Result<[Dataset; 3]> {
    let ds = generate(&cfg.link, &cfg.profiles()?, speed_mps, cfg.dataset.n_samples, cfg.seed)?;
    let (mut tr, mut va, mut te) = ds.split(cfg.dataset.ratios)?;
    if !tr.is_empty() {
        let stats = NormalizationStats::fit_samples(&tr.samples)?;
        for part in [&mut tr, &mut va, &mut te] {
            part.info.normalization = Some(stats);
        }
    }
    Ok([tr, va, te])
}

pub fn load_split(dir: &Path, split: SplitArg) -> Result<Dataset> {
    let path = dir.join(split.file());
    if !path.exists() {
        return Err(CliError::runtime(format!(
            "{} not found; run gen-data first or pass --data",
            path.display()
        )));
    }
    Dataset::load(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenDataSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub speed_kmh: f64,
    pub profiles: Vec<String>,
    pub normalization: Option<NormalizationStats>,
}

pub fn gen_data(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<GenDataSummary> {
    let [tr, va, te] = make_splits(cfg, cfg.speed_mps())?;
    for (split, part) in [(SplitArg::Train, &tr), (SplitArg::Val, &va), (SplitArg::Test, &te)] {
        let path = out.path(split.file());
        part.save(&path)?;
        out.record(Dataset::sidecar_path(&path));
        out.record(path);
    }
    let summary = GenDataSummary {
        n_train: tr.len(),
        n_val: va.len(),
        n_test: te.len(),
        speed_kmh: cfg.dataset.speed_kmh,
        profiles: tr.info.profiles.clone(),
        normalization: tr.info.normalization,
    };
    out.write_json("gen_data.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub counter: u64,
    pub nmse_h: f64,
    pub nmse_p: f64,
    pub cp_error: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub method: MethodArg,
    pub model: PathBuf,
    pub n_train: usize,
    pub n_val: usize,
    /// Batches run; zero for the closed-form LMMSE fit.
    pub batches: u64,
    pub criterion: String,
    pub best_counter: u64,
    pub best_score: f64,
    /// Validation metrics of the selected model.
    pub val: MetricSummary,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Trains `method` and writes its model, log and scores under `prefix`.
pub fn train_method(
    cfg: &ExperimentConfig,
    method: MethodArg,
    cnn_loss: CnnLoss,
    tr: &Dataset,
    va: &Dataset,
    out: &mut Outputs,
    prefix: &str,
) -> Result<(TrainSummary, Box<dyn Predictor>)> {
    let model_file = method
        .model_file()
        .ok_or_else(|| CliError::config(format!("method {} has nothing to train", method.name())))?;
    let model = out.path(&format!("{prefix}{model_file}"));
    create_parent(&model)?;
    if method == MethodArg::Lmmse {
        let pairs: Vec<_> = tr.samples.iter().map(|s| (&s.h_ul, &s.h_dl)).collect();
        let fitted = LmmseModel::fit(&pairs, LmmseOptions::default())?;
        let mut w = BufWriter::new(File::create(&model)?);
        fitted.save(&mut w)?;
        w.flush()?;
        out.record(model.clone());
        let (_, val) = score(&fitted, va, cfg.train.lambda2)?;
        let summary = TrainSummary {
            method,
            model,
            n_train: tr.len(),
            n_val: va.len(),
            batches: 0,
            criterion: "nmse_h".into(),
            best_counter: 0,
            best_score: val.nmse_h,
            val,
        };
        return Ok((summary, Box::new(fitted)));
    }

    let algo = match method {
        MethodArg::Cpcgan => Method::Cpcgan,
        _ => Method::Cnn { loss: cnn_loss },
    };
    let name = method.name();
    let log_name = format!("{prefix}{name}_log.jsonl");
    let log_path = out.path(&log_name);
    let mut sink = BufWriter::new(File::create(&log_path)?);
    let result = train(&tr.samples, &va.samples, &cfg.train, algo, Some(&mut sink));
    sink.flush()?;
    out.record(log_path);
    let run = result?;
    run.best.save(&model)?;
    out.record(model.clone());
    let scores: Vec<ScoreRow> = run
        .scores
        .iter()
        .map(|s| ScoreRow {
            counter: s.counter,
            nmse_h: s.metrics.nmse_h,
            nmse_p: s.metrics.nmse_p,
            cp_error: s.metrics.cp_error,
            score: s.score,
        })
        .collect();
    out.write_csv(&format!("{prefix}{name}_scores.csv"), &scores)?;
    let best = &run.best;
    let summary = TrainSummary {
        method,
        model,
        n_train: tr.len(),
        n_val: va.len(),
        batches: run.batches,
        criterion: best.criterion.clone(),
        best_counter: best.counter,
        best_score: best.score,
        val: best.metrics.ok_or_else(|| CliError::runtime("selected checkpoint carries no metrics"))?,
    };
    out.write_json(&format!("{prefix}{name}_train.json"), &summary)?;
    Ok((summary, Box::new(GanPredictor::from_checkpoint(best))))
}

pub fn train_cmd(
    cfg: &ExperimentConfig,
    method: MethodArg,
    cnn_loss: CnnLoss,
    data: &Path,
    out: &mut Outputs,
) -> Result<TrainSummary> {
    let tr = load_split(data, SplitArg::Train)?;
    let va = load_split(data, SplitArg::Val)?;
    Ok(train_method(cfg, method, cnn_loss, &tr, &va, out, "")?.0)
}

/// Loads the predictor for `method` and checks it against `dims`
/// (`(UL, DL)` grid sizes of the dataset it will be applied to).
pub fn load_predictor(
    method: MethodArg,
    model: Option<&Path>,
    out_dir: &Path,
    dims: ((usize, usize), (usize, usize)),
) -> Result<Box<dyn Predictor>> {
    let (ul, dl) = dims;
    let path = model
        .map(Path::to_path_buf)
        .or_else(|| method.model_file().map(|f| out_dir.join(f)));
    let predictor: Box<dyn Predictor> = match method {
        MethodArg::StaleUl => {
            if ul != dl {
                return Err(CliError::config(format!("stale_ul needs equal UL and DL grids, got {ul:?} and {dl:?}")));
            }
            Box::new(StaleUl { dims: dl })
        }
        MethodArg::Zero => Box::new(Zero { dims: dl }),
        MethodArg::Lmmse => {
            let path = path.expect("lmmse has a model file");
            let f = File::open(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            let m = LmmseModel::load(BufReader::new(f))?;
            if m.ul_dims() != ul {
                return Err(CliError::config(format!(
                    "model {} expects UL grid {:?}, dataset has {ul:?}",
                    path.display(),
                    m.ul_dims()
                )));
            }
            Box::new(m)
        }
        MethodArg::Cpcgan | MethodArg::Cnn => {
            let path = path.expect("networks have a model file");
            let ckpt = Checkpoint::load(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            if ckpt.method.name() != method.name() {
                return Err(CliError::config(format!(
                    "checkpoint {} was trained as {}, not {}",
                    path.display(),
                    ckpt.method.name(),
                    method.name()
                )));
            }
            Box::new(GanPredictor::from_checkpoint(&ckpt))
        }
    };
    if predictor.dl_dims() != dl {
        return Err(CliError::config(format!(
            "{} predicts {:?} grids but the dataset has {dl:?}",
            method.name(),
            predictor.dl_dims()
        )));
    }
    Ok(predictor)
}

fn dataset_dims(ds: &Dataset) -> ((usize, usize), (usize, usize)) {
    (ds.ul_dims(), ds.dl_dims())
}

/// Per-sample metrics of `predictor` on `ds`, ids being generation indices.
pub fn score(predictor: &dyn Predictor, ds: &Dataset, lambda2: f64) -> Result<(Vec<MetricRow>, MetricSummary)> {
    let preds = predictor.predict_batch(&ds.h_ul())?;
    let rows = evaluate(&ds.h_dl(), &preds, lambda2, ds.info.first_index)?;
    let summary = MetricSummary::from_rows(&rows)?;
    Ok((rows, summary))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: MethodArg,
    pub split: String,
    #[serde(flatten)]
    pub summary: MetricSummary,
}

pub fn eval_cmd(
    cfg: &ExperimentConfig,
    method: MethodArg,
    model: Option<&Path>,
    data: &Path,
    split: SplitArg,
    out: &mut Outputs,
) -> Result<EvalReport> {
    let ds = load_split(data, split)?;
    let predictor = load_predictor(method, model, &out.dir, dataset_dims(&ds))?;
    let (rows, summary) = score(predictor.as_ref(), &ds, cfg.train.lambda2)?;
    let stem = format!("eval_{}_{}", method.name(), split.name());
    out.write_csv(&format!("{stem}.csv"), &rows)?;
    let report = EvalReport {
        method,
        split: split.name().into(),
        summary,
    };
    out.write_json(&format!("{stem}.json"), &report)?;
    Ok(report)
}

pub fn ber_cmd(
    cfg: &ExperimentConfig,
    method: MethodArg,
    model: Option<&Path>,
    data: &Path,
    split: SplitArg,
    out: &mut Outputs,
) -> Result<Vec<BerPoint>> {
    let ds = load_split(data, split)?;
    let predictor = load_predictor(method, model, &out.dir, dataset_dims(&ds))?;
    let pairs: Vec<(&CsiMatrix, &CsiMatrix)> = ds.samples.iter().map(|s| (&s.h_ul, &s.h_dl)).collect();
    let points = ber_curve(&pairs, Some(predictor.as_ref()), &cfg.link_sim())?;
    out.write_with(&format!("ber_{}_{}.csv", method.name(), split.name()), |w| {
        Ok(write_ber_csv(w, &points)?)
    })?;
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMode {
    /// One existing model evaluated at every speed.
    Eval,
    /// A fresh model trained and tested at each speed.
    Train,
    /// One model trained at `--train-speed`, tested at every speed.
    Cross,
}

impl SweepMode {
    fn name(self) -> &'static str {
        match self {
            SweepMode::Eval => "eval",
            SweepMode::Train => "train",
            SweepMode::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Empty in eval mode, where the model comes from outside the sweep.
    pub train_speed_kmh: Option<f64>,
    pub test_speed_kmh: f64,
    pub n_test: usize,
    pub nmse_h: f64,
    pub nmse_p: f64,
    pub cp_error: f64,
}

fn speed_dir(kmh: f64) -> String {
    format!("speed_{kmh}/")
}

/// Config with the dataset speed replaced.
fn at_speed(cfg: &ExperimentConfig, kmh: f64) -> Result<ExperimentConfig> {
    if !(kmh >= 0.0 && kmh.is_finite()) {
        return Err(CliError::config(format!("speeds: {kmh} is not a finite speed >= 0")));
    }
    let mut c = cfg.clone();
    c.dataset.speed_kmh = kmh;
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_speed_cmd(
    cfg: &ExperimentConfig,
    mode: SweepMode,
    method: MethodArg,
    cnn_loss: CnnLoss,
    model: Option<&Path>,
    speeds: &[f64],
    train_speed: Option<f64>,
    out: &mut Outputs,
) -> Result<Vec<SweepRow>> {
    if speeds.is_empty() {
        return Err(CliError::config("speeds: at least one speed is required"));
    }
    let row = |train_kmh: Option<f64>, test_kmh: f64, s: MetricSummary| SweepRow {
        train_speed_kmh: train_kmh,
        test_speed_kmh: test_kmh,
        n_test: s.n_samples,
        nmse_h: s.nmse_h,
        nmse_p: s.nmse_p,
        cp_error: s.cp_error,
    };
    let lambda2 = cfg.train.lambda2;
    let mut rows = Vec::with_capacity(speeds.len());
    match mode {
        SweepMode::Eval => {
            let mut predictor = None;
            for &kmh in speeds {
                let c = at_speed(cfg, kmh)?;
                let [_, _, te] = make_splits(&c, c.speed_mps())?;
                if predictor.is_none() {
                    predictor = Some(load_predictor(method, model, &out.dir, dataset_dims(&te))?);
                }
                let p = predictor.as_deref().expect("loaded above");
                rows.push(row(None, kmh, score(p, &te, lambda2)?.1));
            }
        }
        SweepMode::Train => {
            for &kmh in speeds {
                let c = at_speed(cfg, kmh)?;
                let [tr, va, te] = make_splits(&c, c.speed_mps())?;
                let (_, p) = train_method(&c, method, cnn_loss, &tr, &va, out, &speed_dir(kmh))?;
                rows.push(row(Some(kmh), kmh, score(p.as_ref(), &te, lambda2)?.1));
            }
        }
        SweepMode::Cross => {
            let train_kmh = train_speed.ok_or_else(|| CliError::config("--train-speed is required in cross mode"))?;
            let c = at_speed(cfg, train_kmh)?;
            let [tr, va, _] = make_splits(&c, c.speed_mps())?;
            let (_, p) = train_method(&c, method, cnn_loss, &tr, &va, out, &speed_dir(train_kmh))?;
            for &kmh in speeds {
                let c = at_speed(cfg, kmh)?;
                let [_, _, te] = make_splits(&c, c.speed_mps())?;
                rows.push(row(Some(train_kmh), kmh, score(p.as_ref(), &te, lambda2)?.1));
            }
        }
    }
    out.write_csv(&format!("sweep_{}_{}.csv", mode.name(), method.name()), &rows)?;
    Ok(rows)
}
