//! `chanpred`: dataset generation, training, evaluation, BER simulation and
//! speed sweeps for DL-CSI prediction experiments.
//!
//! Every command archives its effective configuration as
//! `config.<command>.json` and lists the digests of its outputs in
//! `checksums.sha256`. Exit codes: 0 on success, 2 for configuration
//! errors, 3 for runtime failures including diverged training.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use chanpred_cpcgan::CnnLoss;
use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{MethodArg, SplitArg, SweepMode};
pub use config::{ExperimentConfig, Preset};
pub use error::{CliError, Result};
use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "chanpred", version, about = "DL-CSI prediction experiments")]
pub struct Cli {
    /// JSON experiment config, layered over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Starting point for the config.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,

    /// Overrides one config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Mse,
    L1,
}

impl From<LossArg> for CnnLoss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mse => CnnLoss::Mse,
            LossArg::L1 => CnnLoss::L1,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/val/test datasets.
    GenData,
    /// Train a predictor on the train split, selecting on the val split.
    Train {
        #[arg(long, value_enum, default_value_t = MethodArg::Cpcgan)]
        method: MethodArg,
        /// Loss of the CNN baseline.
        #[arg(long, value_enum, default_value_t = LossArg::Mse)]
        cnn_loss: LossArg,
        /// Dataset directory; defaults to `paths.data`, then `--out`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Per-sample and aggregate metrics of a predictor.
    Eval {
        #[arg(long, value_enum, default_value_t = MethodArg::Cpcgan)]
        method: MethodArg,
        /// Model file; defaults to `paths.model`, then the file `train` writes.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Bit error rate of pre-equalized QPSK over the dataset's DL channels.
    Ber {
        #[arg(long, value_enum, default_value_t = MethodArg::Cpcgan)]
        method: MethodArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Comma-separated SNR grid in dB; overrides `ber.snr_db`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
    },
    /// Metrics across user speeds.
    SweepSpeed {
        #[arg(long, value_enum, default_value_t = SweepMode::Eval)]
        mode: SweepMode,
        #[arg(long, value_enum, default_value_t = MethodArg::Cpcgan)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = LossArg::Mse)]
        cnn_loss: LossArg,
        /// Model for eval mode.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated test speeds in km/h.
        #[arg(long, value_delimiter = ',', required = true)]
        speeds: Vec<f64>,
        /// Training speed in km/h for cross mode.
        #[arg(long)]
        train_speed: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Ber { .. } => "ber",
            Command::SweepSpeed { .. } => "sweep-speed",
        }
    }
}

/// Runs one command and returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be >= 1"));
        }
        // Fails only if a pool already exists, which keeps the earlier size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = ExperimentConfig::load(cli.preset, cli.config.as_deref(), &cli.set, cli.seed)?;
    if let Command::Ber { snr: Some(snr), .. } = &cli.command {
        cfg.ber.snr_db = snr.clone();
        cfg.validate()?;
    }
    let mut out = Outputs::new(&cli.out)?;
    out.write_text(&format!("config.{}.json", cli.command.name()), &cfg.to_json())?;
    let data_dir = |data: &Option<PathBuf>| {
        data.clone()
            .or_else(|| cfg.paths.data.clone())
            .unwrap_or_else(|| cli.out.clone())
    };
    let model_path = |model: &Option<PathBuf>| model.clone().or_else(|| cfg.paths.model.clone());

    let mut lines = Vec::new();
    match &cli.command {
        Command::GenData => {
            let s = commands::gen_data(&cfg, &mut out)?;
            lines.push(format!(
                "train {} / val {} / test {} samples at {} km/h ({}) -> {}",
                s.n_train,
                s.n_val,
                s.n_test,
                s.speed_kmh,
                s.profiles.join("+"),
                cli.out.display()
            ));
        }
        Command::Train { method, cnn_loss, data } => {
            let s = commands::train_cmd(&cfg, *method, (*cnn_loss).into(), &data_dir(data), &mut out)?;
            lines.push(format!(
                "{}: {} batches, best {} {:.6} at batch {} (val nmse_h {:.6}, nmse_p {:.6}) -> {}",
                method.name(),
                s.batches,
                s.criterion,
                s.best_score,
                s.best_counter,
                s.val.nmse_h,
                s.val.nmse_p,
                s.model.display()
            ));
        }
        Command::Eval {
            method,
            model,
            data,
            split,
        } => {
            let r = commands::eval_cmd(&cfg, *method, model_path(model).as_deref(), &data_dir(data), *split, &mut out)?;
            lines.push(format!(
                "{} on {} ({} samples): nmse_h {:.6}  nmse_p {:.6}  cp_error {:.6}",
                method.name(),
                r.split,
                r.summary.n_samples,
                r.summary.nmse_h,
                r.summary.nmse_p,
                r.summary.cp_error
            ));
        }
        Command::Ber {
            method,
            model,
            data,
            split,
            ..
        } => {
            let points = commands::ber_cmd(&cfg, *method, model_path(model).as_deref(), &data_dir(data), *split, &mut out)?;
            lines.push(format!("{:<10} {:>8} {:>12}", "mode", "snr_db", "ber"));
            for p in points {
                lines.push(format!("{:<10} {:>8} {:>12.3e}", p.mode.as_str(), p.snr_db, p.ber));
            }
        }
        Command::SweepSpeed {
            mode,
            method,
            cnn_loss,
            model,
            speeds,
            train_speed,
        } => {
            let rows = commands::sweep_speed_cmd(
                &cfg,
                *mode,
                *method,
                (*cnn_loss).into(),
                model_path(model).as_deref(),
                speeds,
                *train_speed,
                &mut out,
            )?;
            lines.push(format!("{:>10} {:>10} {:>10} {:>10}", "train_kmh", "test_kmh", "nmse_h", "nmse_p"));
            for r in rows {
                let train = r.train_speed_kmh.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                lines.push(format!("{:>10} {:>10} {:>10.6} {:>10.6}", train, r.test_speed_kmh, r.nmse_h, r.nmse_p));
            }
        }
    }
    out.finish()?;
    Ok(lines)
}
