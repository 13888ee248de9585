//! Experiment configuration: one JSON document with the sections `link`,
//! `profile`, `dataset`, `train`, `ber`, `paths` and `seed`.
//!
//! A document is layered over a preset, so it only needs the keys it
//! changes. Unknown keys are rejected and every validation error names the
//! offending field by its dotted path.

use std::path::{Path, PathBuf};

use chanpred_core::channel::{kmh_to_mps, LinkConfig, ProfileDef};
use chanpred_core::dataset::WeightedProfile;
use chanpred_core::linklevel::{EqualizerMode, LinkSimConfig, DEFAULT_CLIP_GAIN};
use chanpred_cpcgan::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub name: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Profiles drawn per sample with probability proportional to `weight`.
/// Names refer to `custom` entries first, then to the built-in tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub mix: Vec<MixEntry>,
    pub custom: Vec<ProfileDef>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            mix: vec![MixEntry {
                name: "EVA".into(),
                weight: 1.0,
            }],
            custom: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_samples: usize,
    /// Train/val/test shares of `n_samples`, split in generation order.
    pub ratios: [f64; 3],
    pub speed_kmh: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_samples: 40_000,
            ratios: [0.875, 0.025, 0.1],
            speed_kmh: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerSection {
    pub snr_db: Vec<f64>,
    pub n_frames: usize,
    pub modes: Vec<EqualizerMode>,
    pub clip_gain: f64,
}

impl Default for BerSection {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_frames: 400,
            modes: EqualizerMode::ALL.to_vec(),
            clip_gain: DEFAULT_CLIP_GAIN,
        }
    }
}

/// Input locations; both default to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Directory holding `train.csid`, `val.csid` and `test.csid`.
    pub data: Option<PathBuf>,
    /// Checkpoint (or LMMSE model) used by `eval`, `ber` and `sweep-speed`.
    pub model: Option<PathBuf>,
}

/// The top-level `seed` drives every random choice of a command; the
/// effective config carries it into `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub link: LinkConfig,
    pub profile: ProfileSection,
    pub dataset: DatasetSection,
    pub train: TrainConfig,
    pub ber: BerSection,
    pub paths: PathsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Preset::Full.config()
    }
}

/// Named starting points for a config document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Full-size proportions: 40 000 samples, `n_base` 64.
    Full,
    /// 2000/200/400 samples, `n_base` 8; minutes on a laptop CPU.
    Desk,
    /// 200/20/20 samples, `n_base` 2; seconds, for smoke runs.
    Micro,
}

fn shares(train: usize, val: usize, test: usize) -> [f64; 3] {
    let n = (train + val + test) as f64;
    [train as f64 / n, val as f64 / n, test as f64 / n]
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            seed: 0,
            link: LinkConfig::default(),
            profile: ProfileSection::default(),
            dataset: DatasetSection::default(),
            train: TrainConfig::default(),
            ber: BerSection::default(),
            paths: PathsSection::default(),
        };
        match self {
            Preset::Full => base,
            Preset::Desk => ExperimentConfig {
                dataset: DatasetSection {
                    n_samples: 2600,
                    ratios: shares(2000, 200, 400),
                    ..base.dataset
                },
                train: TrainConfig {
                    n_base: 8,
                    ..base.train
                },
                ..base
            },
            Preset::Micro => ExperimentConfig {
                dataset: DatasetSection {
                    n_samples: 240,
                    ratios: shares(200, 20, 20),
                    ..base.dataset
                },
                train: TrainConfig {
                    n_base: 2,
                    batch_size: 2,
                    epochs: 2,
                    ..base.train
                },
                ber: BerSection {
                    n_frames: 40,
                    ..base.ber
                },
                ..base
            },
        }
    }
}

/// Recursively overlays `top` on `base`; arrays and scalars are replaced.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses, as a
/// plain string otherwise.
fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set {spec:?}: expected key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::config(format!("--set {spec:?}: empty key in path")));
    }
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("--set {path}: '{key}' is not inside a section")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::config(format!("--set {path}: parent is not a section")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Builds the effective config: preset, then the config file, then each
    /// `--set` override, then `--seed`.
    pub fn load(preset: Preset, file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut doc = serde_json::to_value(preset.config()).expect("config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            let top: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
            if !top.is_object() {
                return Err(CliError::config(format!("config {}: expected a JSON object", path.display())));
            }
            merge(&mut doc, top);
        }
        for spec in overrides {
            apply_override(&mut doc, spec)?;
        }
        if let Some(seed) = seed {
            doc["seed"] = Value::from(seed);
        }
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self> {
        let mut cfg: Self = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate().map_err(|e| CliError::config(format!("link: {e}")))?;
        self.train.validate().map_err(|e| CliError::config(format!("train: {e}")))?;
        self.profiles()?;
        let d = &self.dataset;
        if d.n_samples == 0 {
            return Err(CliError::config("dataset.n_samples: must be > 0"));
        }
        chanpred_core::dataset::split_counts(d.n_samples, d.ratios)
            .map_err(|e| CliError::config(format!("dataset.ratios: {e}")))?;
        if !(d.speed_kmh >= 0.0 && d.speed_kmh.is_finite()) {
            return Err(CliError::config("dataset.speed_kmh: must be finite and >= 0"));
        }
        let b = &self.ber;
        if b.snr_db.is_empty() || b.snr_db.iter().any(|s| s.is_nan()) {
            return Err(CliError::config("ber.snr_db: needs at least one SNR and no NaN"));
        }
        if b.n_frames == 0 {
            return Err(CliError::config("ber.n_frames: must be > 0"));
        }
        if !(b.clip_gain > 0.0 && b.clip_gain.is_finite()) {
            return Err(CliError::config("ber.clip_gain: must be finite and > 0"));
        }
        Ok(())
    }

    /// Resolves `profile.mix` against the custom and built-in tables.
    pub fn profiles(&self) -> Result<Vec<WeightedProfile>> {
        if self.profile.mix.is_empty() {
            return Err(CliError::config("profile.mix: at least one profile is required"));
        }
        self.profile
            .mix
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let def = self
                    .profile
                    .custom
                    .iter()
                    .find(|c| c.name == entry.name)
                    .cloned()
                    .or_else(|| ProfileDef::builtin(&entry.name))
                    .ok_or_else(|| {
                        let mut known: Vec<String> = ProfileDef::BUILTIN.iter().map(|s| s.to_string()).collect();
                        known.extend(self.profile.custom.iter().map(|c| c.name.clone()));
                        CliError::config(format!(
                            "profile.mix[{i}].name: unknown profile {:?} (known: {})",
                            entry.name,
                            known.join(", ")
                        ))
                    })?;
                if !(entry.weight > 0.0 && entry.weight.is_finite()) {
                    return Err(CliError::config(format!("profile.mix[{i}].weight: must be finite and > 0")));
                }
                let profile = def
                    .resolve(&self.link)
                    .map_err(|e| CliError::config(format!("profile.mix[{i}] ({}): {e}", entry.name)))?;
                Ok(WeightedProfile {
                    profile,
                    weight: entry.weight,
                })
            })
            .collect()
    }

    pub fn speed_mps(&self) -> f64 {
        kmh_to_mps(self.dataset.speed_kmh)
    }

    /// Link simulation settings; the perfect and none reference modes are
    /// always included.
    pub fn link_sim(&self) -> LinkSimConfig {
        let modes = EqualizerMode::ALL
            .into_iter()
            .filter(|m| matches!(m, EqualizerMode::Perfect | EqualizerMode::None) || self.ber.modes.contains(m))
            .collect();
        LinkSimConfig {
            snr_db: self.ber.snr_db.clone(),
            n_frames: self.ber.n_frames,
            modes,
            clip_gain: self.ber.clip_gain,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
