//! Experiment configuration: a TOML file with one section per stage.
//!
//! ```toml
//! [run]
//! seed = 7
//! n_units = 3
//! output_dir = "out"
//! trust_mode = "untrusted"   # or "trusted"
//! ablation = "none"          # none | normal | regular | attack
//!
//! [dataset]
//! source = "synthetic"       # or "csv"
//! path = "wustl_iiot_2018.csv"
//! profile = "wustl-iiot"     # or "custom" with `features` and `label`
//! subsample = 50000
//! train_ratio = 0.8
//!
//! [dataset.synthetic]
//! n_normal = 5000
//! n_attack = 500
//! features = 40
//!
//! [autoencoder]
//! code_size = 25
//! epochs = 100
//! learning_rate = 0.01
//! dropout_rate = 0.05
//! batch_size = 256
//!
//! [adaboost]
//! rounds = 100
//! max_depth = 3
//! class_weight_values = [1, 2, 4, 6, 8, 10]
//! validation_ratio = 0.2
//! mcc_slack = 0.05
//!
//! [federation]
//! include_class_feature = false
//! ```
//!
//! Every section and key is optional; missing values take the defaults above.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaboost::BoostConfig;
use crate::dataset::CsvSchema;
use crate::neuralnet::TrainConfig;
use crate::seed::{derive_seed, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<FieldError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrustMode {
    Trusted,
    /// Worst case: every sample goes to the cloud.
    #[default]
    Untrusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    #[default]
    None,
    Normal,
    Regular,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaProfile {
    #[default]
    WustlIiot,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_units: usize,
    pub output_dir: PathBuf,
    pub trust_mode: TrustMode,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            n_units: 3,
            output_dir: PathBuf::from("out"),
            trust_mode: TrustMode::Untrusted,
            ablation: Ablation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_normal: usize,
    pub n_attack: usize,
    pub features: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_normal: 5000,
            n_attack: 500,
            features: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub profile: SchemaProfile,
    /// Feature columns for the custom profile.
    pub features: Vec<String>,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    pub train_ratio: f64,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DatasetSource::Synthetic,
            path: None,
            profile: SchemaProfile::WustlIiot,
            features: Vec::new(),
            label: "Target".into(),
            subsample: None,
            train_ratio: 0.8,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl DatasetConfig {
    pub fn csv_schema(&self) -> CsvSchema {
        match self.profile {
            SchemaProfile::WustlIiot => CsvSchema::wustl_iiot(),
            SchemaProfile::Custom => CsvSchema {
                features: self.features.clone(),
                label: self.label.clone(),
            },
        }
    }
}

/// Autoencoder shape and training hyperparameters (the seed comes from the
/// master seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub code_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        AutoencoderConfig {
            code_size: 25,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            dropout_rate: t.dropout_rate,
            batch_size: t.batch_size,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_epsilon: t.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaboostConfig {
    pub rounds: usize,
    pub max_depth: usize,
    /// Values combined pairwise into the (cw_0, cw_1) grid.
    pub class_weight_values: Vec<f64>,
    pub validation_ratio: f64,
    pub mcc_slack: f64,
}

impl Default for AdaboostConfig {
    fn default() -> Self {
        AdaboostConfig {
            rounds: 100,
            max_depth: 3,
            class_weight_values: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            validation_ratio: 0.2,
            mcc_slack: 0.05,
        }
    }
}

impl AdaboostConfig {
    pub fn boost_config(&self) -> BoostConfig {
        BoostConfig {
            rounds: self.rounds,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    /// Feed the local predicted-class byte to the cloud models as a feature.
    pub include_class_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub dataset: DatasetConfig,
    pub autoencoder: AutoencoderConfig,
    pub adaboost: AdaboostConfig,
    pub federation: FederationConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    /// Parses and validates a config file. Relative dataset paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.dataset.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn train_config(&self) -> TrainConfig {
        let a = &self.autoencoder;
        TrainConfig {
            epochs: a.epochs,
            learning_rate: a.learning_rate,
            dropout_rate: a.dropout_rate,
            batch_size: a.batch_size,
            adam_beta1: a.adam_beta1,
            adam_beta2: a.adam_beta2,
            adam_epsilon: a.adam_epsilon,
            seed: derive_seed(self.run.seed, Stage::AutoencoderTrain, 0),
        }
    }

    /// Input width implied by the dataset section.
    pub fn input_width(&self) -> usize {
        match self.dataset.source {
            DatasetSource::Synthetic => self.dataset.synthetic.features,
            DatasetSource::Csv => self.dataset.csv_schema().features.len(),
        }
    }

    /// Every field problem at once.
    pub fn problems(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        let d = &self.dataset;
        if self.run.n_units == 0 {
            bad("run.n_units", "must be at least 1".into());
        }
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            bad("dataset.train_ratio", format!("must lie in (0, 1), got {}", d.train_ratio));
        }
        match d.source {
            DatasetSource::Csv => match &d.path {
                None => bad("dataset.path", "required when source = \"csv\"".into()),
                Some(p) if !p.exists() => bad("dataset.path", format!("file not found: {}", p.display())),
                Some(_) => {}
            },
            DatasetSource::Synthetic => {
                let s = &d.synthetic;
                if s.features < 2 {
                    bad("dataset.synthetic.features", format!("must be at least 2, got {}", s.features));
                }
                if s.n_normal == 0 {
                    bad("dataset.synthetic.n_normal", "must be at least 1".into());
                }
                if s.n_attack == 0 {
                    bad("dataset.synthetic.n_attack", "must be at least 1".into());
                }
                if s.n_normal + s.n_attack < self.run.n_units * 2 {
                    bad("dataset.synthetic", "too few records for the number of units".into());
                }
            }
        }
        if d.profile == SchemaProfile::Custom {
            if d.features.is_empty() {
                bad("dataset.features", "required for the custom profile".into());
            }
            if d.label.is_empty() {
                bad("dataset.label", "must name the label column".into());
            }
        }
        if d.subsample == Some(0) {
            bad("dataset.subsample", "must be at least 1".into());
        }
        let k = self.input_width();
        let h = self.autoencoder.code_size;
        if h < 2 || h >= k {
            bad("autoencoder.code_size", format!("must satisfy 2 <= code_size < {k}, got {h}"));
        }
        for p in self.train_config().problems() {
            bad("autoencoder", p);
        }
        let a = &self.adaboost;
        if a.rounds == 0 {
            bad("adaboost.rounds", "must be at least 1".into());
        }
        if a.class_weight_values.is_empty() {
            bad("adaboost.class_weight_values", "must not be empty".into());
        }
        if a.class_weight_values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            bad("adaboost.class_weight_values", "values must be positive and finite".into());
        }
        if !(a.validation_ratio > 0.0 && a.validation_ratio < 1.0) {
            bad("adaboost.validation_ratio", format!("must lie in (0, 1), got {}", a.validation_ratio));
        }
        if !(a.mcc_slack >= 0.0) {
            bad("adaboost.mcc_slack", "must be non-negative".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.autoencoder.code_size, 25);
        assert_eq!(cfg.adaboost.rounds, 100);
    }

    #[test]
    fn round_trip_through_toml() {
        let text = r#"
[run]
seed = 11
trust_mode = "trusted"
ablation = "attack"

[dataset]
source = "synthetic"
train_ratio = 0.75

[dataset.synthetic]
n_normal = 300
n_attack = 40
features = 12

[autoencoder]
code_size = 4
epochs = 3
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.run.trust_mode, TrustMode::Trusted);
        assert_eq!(cfg.run.ablation, Ablation::Attack);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[run]\nseeed = 3\n").is_err());
    }

    #[test]
    fn missing_csv_path_is_a_field_error() {
        let cfg = ExperimentConfig::from_toml_str("[dataset]\nsource = \"csv\"\n").unwrap();
        let problems = cfg.problems();
        assert!(problems.iter().any(|p| p.field == "dataset.path"), "{problems:?}");
    }

    #[test]
    fn collects_all_problems() {
        let text = "[autoencoder]\ncode_size = 60\nepochs = 0\n[adaboost]\nrounds = 0\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let fields: Vec<String> = cfg.problems().into_iter().map(|p| p.field).collect();
        assert!(fields.contains(&"autoencoder.code_size".to_string()));
        assert!(fields.contains(&"autoencoder".to_string()));
        assert!(fields.contains(&"adaboost.rounds".to_string()));
    }
}
