use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wheelodo::domain_adapt::{RecalibrationConfig, ScalerPolicy};
use wheelodo::eval::DEFAULT_SCENARIOS;
use wheelodo::rnn::{ParamGroup, TrainConfig};

pub const SEED_ENV: &str = "WHEELODO_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub freeze: Vec<ParamGroup>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            dropout_rate: d.dropout_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            hidden_size: d.hidden_size,
            freeze: d.freeze,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecalSection {
    pub seconds: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub freeze: Vec<ParamGroup>,
    pub scaler_policy: ScalerPolicy,
}

impl Default for RecalSection {
    fn default() -> Self {
        let d = RecalibrationConfig::default();
        RecalSection {
            seconds: 50,
            learning_rate: d.train.learning_rate,
            dropout_rate: d.train.dropout_rate,
            epochs: d.train.epochs,
            batch_size: d.train.batch_size,
            freeze: d.train.freeze,
            scaler_policy: d.scaler_policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub scenarios: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            scenarios: DEFAULT_SCENARIOS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub datasets: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

/// Everything a run depends on besides its input files.
///
/// Values are resolved in this order, later wins: built-in defaults, the
/// `--config` file, `WHEELODO_SEED`, command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub train: TrainSection,
    pub recalibrate: RecalSection,
    pub evaluate: EvalSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(file: Option<&Path>) -> Result<RunConfig> {
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            config.seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))?;
        }
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            dropout_rate: t.dropout_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden_size: t.hidden_size,
            seed: self.seed,
            freeze: t.freeze.clone(),
            ..TrainConfig::default()
        }
    }

    pub fn recal_config(&self) -> RecalibrationConfig {
        let r = &self.recalibrate;
        RecalibrationConfig {
            train: TrainConfig {
                learning_rate: r.learning_rate,
                dropout_rate: r.dropout_rate,
                epochs: r.epochs,
                batch_size: r.batch_size,
                seed: self.seed,
                freeze: r.freeze.clone(),
                ..TrainConfig::default()
            },
            scaler_policy: r.scaler_policy,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}
