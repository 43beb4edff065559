//! Run configuration: a single flat JSON document wiring the dataset,
//! split policy, architecture, and training schedule together.

use std::fs;
use std::path::Path;

use avgtime_core::cluster::Grouping;
use avgtime_core::data::SplitSpec;
use avgtime_core::model::ModelConfig;
use avgtime_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_ratios() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

fn default_mode() -> String {
    "ratio".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { mode: default_mode(), ratios: default_ratios() }
    }
}

impl SplitSection {
    pub fn to_spec(&self) -> Result<SplitSpec, CliError> {
        let spec = match self.mode.as_str() {
            "ratio" => SplitSpec::Ratio {
                train: self.ratios[0],
                val: self.ratios[1],
                test: self.ratios[2],
            },
            "ett-hourly" => SplitSpec::EttHourly,
            "ett-minutely" => SplitSpec::EttMinutely,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown split mode {:?} (expected ratio, ett-hourly, ett-minutely)",
                    other
                )))
            }
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

fn default_d_model() -> usize {
    256
}

fn default_n_heads() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub n_transformer_layers: usize,
    #[serde(default)]
    pub n_mlp_layers: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub channel_independent: bool,
    #[serde(default = "default_true")]
    pub revin_affine: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n_transformer_layers: 0,
            n_mlp_layers: 0,
            d_model: default_d_model(),
            n_heads: default_n_heads(),
            dropout: 0.0,
            channel_independent: true,
            revin_affine: true,
        }
    }
}

fn default_lookback() -> usize {
    96
}

fn default_horizon() -> usize {
    96
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_path: String,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    /// Presence activates channel clustering with this Spearman threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub ablation_disable_embedding: bool,
    pub output_dir: String,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {}", path.display(), e)))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(CliError::Usage("lookback and horizon must be ≥ 1".into()));
        }
        self.split.to_spec()?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(t) = self.threshold {
            if !(-1.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!("threshold {} outside [-1, 1]", t)));
            }
        }
        if self.output_dir.is_empty() {
            return Err(CliError::Usage("output_dir must not be empty".into()));
        }
        // architecture checks that do not need the dataset
        self.model_config(1, None).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    /// Full architecture config once the channel count is known.
    pub fn model_config(
        &self,
        n_channels: usize,
        grouping: Option<Grouping>,
    ) -> avgtime_core::Result<ModelConfig> {
        let config = ModelConfig {
            n_channels,
            lookback: self.lookback,
            horizon: self.horizon,
            n_transformer_layers: self.model.n_transformer_layers,
            n_mlp_layers: self.model.n_mlp_layers,
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            dropout: self.model.dropout,
            channel_independent: self.model.channel_independent,
            grouping,
            revin_affine: self.model.revin_affine,
            raw_only: self.ablation_disable_embedding,
        };
        config.validate()?;
        Ok(config)
    }
}
