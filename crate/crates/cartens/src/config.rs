//! TOML run configuration covering all module configs. Unknown keys are
//! rejected everywhere.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{LossWeights, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: PathBuf,
    pub valid_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub lr_floor: f64,
    pub fit_reference_energies: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        OptimizerConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            patience: t.patience,
            lr_factor: t.lr_factor,
            lr_floor: t.lr_floor,
            fit_reference_energies: t.fit_reference_energies,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { checkpoint: "model.json".into(), metrics: "metrics.csv".into() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    /// 0 means all available cores; the engine currently evaluates serially.
    pub threads: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.model.validate()?;
        cfg.loss.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.optimizer.epochs,
            batch_size: self.optimizer.batch_size,
            lr: self.optimizer.lr,
            valid_fraction: self.data.valid_fraction,
            seed: self.seed,
            patience: self.optimizer.patience,
            lr_factor: self.optimizer.lr_factor,
            lr_floor: self.optimizer.lr_floor,
            fit_reference_energies: self.optimizer.fit_reference_energies,
            weights: self.loss.clone(),
        }
    }
}
