//! Experiment configuration: a single versioned JSON document. Unknown
//! keys are rejected so a config file means exactly one experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::TrainConfig;

use super::missing::MissingModality;
use super::synth::SyntheticSpec;

pub const CONFIG_VERSION: u32 = 1;

/// The three evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train complete, evaluate complete.
    Complete,
    /// Train complete, evaluate with one whole modality absent.
    InterMissing,
    /// The same missing ratio applied to train and test samples.
    ProportionalMissing,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Complete => "complete",
            Protocol::InterMissing => "inter_missing",
            Protocol::ProportionalMissing => "proportional_missing",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "complete" => Ok(Protocol::Complete),
            "inter_missing" => Ok(Protocol::InterMissing),
            "proportional_missing" => Ok(Protocol::ProportionalMissing),
            other => Err(Error::InvalidConfig(format!(
                "unknown protocol {other:?} (expected complete, inter_missing, or proportional_missing)"
            ))),
        }
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    #[serde(rename = "synthetic")]
    Synthetic(SyntheticSpec),
    /// Directory holding `fundus.txt`, `oct.txt`, `labels.txt`.
    #[serde(rename = "path")]
    Path(PathBuf),
}

/// Network widths (input dims and class count come from the data).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Use the literal unnormalized feature-plan product for the OT token.
    pub literal_projection: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 32,
            literal_projection: false,
        }
    }
}

/// One experiment, fully specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub protocol: Protocol,
    pub data: DataSource,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Missing ratio for a single proportional_missing run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Ratio grid for sweep runs (proportional_missing only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(default = "default_missing_modality")]
    pub missing_modality: MissingModality,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    /// Also train the no-alignment ablation for comparison.
    #[serde(default)]
    pub ablation: bool,
}

fn default_folds() -> usize {
    5
}

fn default_missing_modality() -> MissingModality {
    MissingModality::Oct
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if self.model.embed_dim == 0 || self.model.hidden_dim == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        self.train.validate()?;
        let check_ratio = |r: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                return Err(Error::InvalidConfig(format!("ratio {r} outside [0, 1]")));
            }
            Ok(())
        };
        match self.protocol {
            Protocol::ProportionalMissing => match (&self.ratio, &self.ratios) {
                (Some(r), None) => check_ratio(*r),
                (None, Some(rs)) if !rs.is_empty() => {
                    rs.iter().try_for_each(|&r| check_ratio(r))
                }
                (None, Some(_)) => Err(Error::InvalidConfig("ratios grid is empty".into())),
                (Some(_), Some(_)) => Err(Error::InvalidConfig(
                    "give either ratio or ratios, not both".into(),
                )),
                (None, None) => Err(Error::InvalidConfig(
                    "proportional_missing needs ratio or ratios".into(),
                )),
            },
            _ => {
                if self.ratio.is_some() || self.ratios.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "protocol {} does not take missing ratios",
                        self.protocol.name()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "version": 1,
            "protocol": "complete",
            "data": { "synthetic": { "per_class": 20 } },
            "folds": 2
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(config.folds, 2);
        assert_eq!(config.model.embed_dim, 16);
        assert!(!config.ablation);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal_json().replace("\"folds\": 2", "\"folds\": 2, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        let text = minimal_json().replace("\"version\": 1", "\"version\": 2");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn proportional_needs_a_ratio() {
        let text = minimal_json().replace("\"complete\"", "\"proportional_missing\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn complete_rejects_ratios() {
        let text =
            minimal_json().replace("\"folds\": 2", "\"folds\": 2, \"ratio\": 0.5");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let text = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }
}
