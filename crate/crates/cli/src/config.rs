//! Experiment configuration: a JSON file mirroring the CLI flags.
//!
//! Precedence is flag > config file > default. A run manifest written by
//! `train` embeds the fully resolved config under a `"config"` key, so a
//! manifest can be passed straight back to `--config` to replay a run.

use std::fs;
use std::path::{Path, PathBuf};

use permnet_core::nn::{Activation, LayerSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// Exactly one input kind; the tag enforces it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSpec {
    Jsonl {
        path: PathBuf,
        #[serde(default)]
        lenient: bool,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Pdsv {
        path: PathBuf,
    },
}

fn default_label_column() -> String {
    permnet_core::manifest::DEFAULT_LABEL_COLUMN.to_string()
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_total_occurrences: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub require_both_classes: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_frac: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Dense-stack width override (three values).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Explicit layer stack; wins over `preset` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerConfig>>,
}

/// JSON-friendly layer description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerConfig {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        #[serde(default)]
        l2_weight: f64,
        #[serde(default)]
        dropout_rate: f64,
    },
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel_size: usize,
    },
    Maxpool1d {
        pool_size: usize,
    },
    Gru {
        units: usize,
        #[serde(default)]
        dropout_rate: f64,
    },
    Flatten,
}

impl From<&LayerConfig> for LayerSpec {
    fn from(layer: &LayerConfig) -> LayerSpec {
        match layer {
            LayerConfig::Dense {
                in_dim,
                out_dim,
                activation,
                l2_weight,
                dropout_rate,
            } => LayerSpec::Dense {
                in_dim: *in_dim,
                out_dim: *out_dim,
                activation: *activation,
                l2_weight: *l2_weight,
                dropout_rate: *dropout_rate,
            },
            LayerConfig::Conv1d {
                in_channels,
                filters,
                kernel_size,
            } => LayerSpec::Conv1D {
                in_channels: *in_channels,
                filters: *filters,
                kernel_size: *kernel_size,
            },
            LayerConfig::Maxpool1d { pool_size } => LayerSpec::MaxPool1D {
                pool_size: *pool_size,
            },
            LayerConfig::Gru {
                units,
                dropout_rate,
            } => LayerSpec::Gru {
                units: *units,
                dropout_rate: *dropout_rate,
            },
            LayerConfig::Flatten => LayerSpec::Flatten,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
}

impl ExperimentConfig {
    /// Loads a config file; a run manifest (an object with a `"config"`
    /// key) is unwrapped transparently.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config_value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(config_value)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
