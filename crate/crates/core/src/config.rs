//! Experiment configuration: one TOML document, unknown keys rejected, every
//! error reported with the path of the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{SolverSettings, Strategy};
use crate::al_loop::{AlConfig, DEFAULT_CHECKPOINTS};
use crate::gcn::ModelSpec;
use crate::skeleton_io::{SynthSpec, SBU_DEFAULT_TEST_SUBJECTS};
use crate::training::LossConfig;

/// Environment variable that replaces the dataset root of SBU/FPHA configs.
pub const DATA_ROOT_ENV: &str = "FRUGAL_DATA_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Syntax(String),
    #[error("at `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbuConfig {
    pub root: PathBuf,
    #[serde(default = "default_test_subjects")]
    pub test_subjects: Vec<String>,
    #[serde(default = "default_chunks")]
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FphaConfig {
    pub root: PathBuf,
    #[serde(default = "default_chunks")]
    pub chunks: usize,
}

fn default_test_subjects() -> Vec<String> {
    SBU_DEFAULT_TEST_SUBJECTS.iter().map(|s| s.to_string()).collect()
}

fn default_chunks() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Sbu(SbuConfig),
    Fpha(FphaConfig),
    Synth(SynthSpec),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synth(SynthSpec::default())
    }
}

/// Active-learning section; model and training settings come from the
/// top-level `model` and `training` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlSection {
    pub strategies: Vec<Strategy>,
    pub per_round_k: Option<usize>,
    pub checkpoints: Vec<f64>,
    pub total_budget: Option<f64>,
    pub retrain_from_scratch: bool,
    pub solver: SolverSettings,
}

impl Default for AlSection {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            per_round_k: None,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            total_budget: None,
            retrain_from_scratch: true,
            solver: SolverSettings::default(),
        }
    }
}

/// Regularizer ablation: every configuration runs the same AL protocol up to
/// `budget` and reports the metrics of the final model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub strategy: Strategy,
    pub budget: f64,
    /// Fraction of the pool acquired per round.
    pub round_fraction: f64,
    /// Configuration ids to run (`1..=8`).
    pub configs: Vec<usize>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::DisplayLatent,
            budget: 0.45,
            round_fraction: 0.15,
            configs: (1..=8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; single-run commands use it directly.
    pub seed: u64,
    /// Repetition seeds of `al` and `ablate`; empty means `[seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub training: LossConfig,
    #[serde(default)]
    pub al: AlSection,
    #[serde(default)]
    pub ablation: AblationSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Replace the dataset root with `root` (SBU/FPHA only).
    pub fn override_data_root(&mut self, root: PathBuf) {
        match &mut self.dataset {
            DatasetConfig::Sbu(c) => c.root = root,
            DatasetConfig::Fpha(c) => c.root = root,
            DatasetConfig::Synth(_) => {}
        }
    }

    /// Apply [`DATA_ROOT_ENV`] when it is set.
    pub fn apply_env(&mut self) {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            self.override_data_root(PathBuf::from(root));
        }
    }

    /// AL settings for one strategy.
    pub fn al_config(&self, strategy: Strategy) -> AlConfig {
        AlConfig {
            strategy,
            per_round_k: self.al.per_round_k,
            checkpoints: self.al.checkpoints.clone(),
            total_budget: self.al.total_budget,
            retrain_from_scratch: self.al.retrain_from_scratch,
            model: self.model.clone(),
            retrain: self.training.clone(),
            solver: self.al.solver,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.model.filters == 0 || self.model.layers == 0 {
            return invalid("model.filters and model.layers must be at least 1".into());
        }
        if !(self.model.slope_neg > 0.0 && self.model.slope_neg <= self.model.slope_pos) {
            return invalid(format!(
                "model slopes must satisfy 0 < slope_neg <= slope_pos (got {} / {})",
                self.model.slope_pos, self.model.slope_neg
            ));
        }
        self.training.validate().map_err(|e| ConfigError::Invalid(format!("training: {e}")))?;
        if self.al.strategies.is_empty() {
            return invalid("al.strategies must not be empty".into());
        }
        for s in Strategy::ALL {
            if self.al.strategies.iter().filter(|&&x| x == s).count() > 1 {
                return invalid(format!("al.strategies lists {s} twice"));
            }
        }
        self.al_config(Strategy::Random)
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("al: {e}")))?;
        let ab = &self.ablation;
        if !(ab.budget > 0.0 && ab.budget <= 1.0) {
            return invalid(format!("ablation.budget must lie in (0, 1], got {}", ab.budget));
        }
        if !(ab.round_fraction > 0.0 && ab.round_fraction <= 1.0) {
            return invalid(format!("ablation.round_fraction must lie in (0, 1], got {}", ab.round_fraction));
        }
        if let Some(bad) = ab.configs.iter().find(|&&c| !(1..=8).contains(&c)) {
            return invalid(format!("ablation.configs: unknown configuration #{bad} (expected 1..=8)"));
        }
        if let DatasetConfig::Synth(s) = &self.dataset {
            if s.classes == 0 || s.per_class == 0 || s.joints == 0 || s.frames == 0 || s.chunks == 0 {
                return invalid("dataset: synthetic counts must be at least 1".into());
            }
            if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
                return invalid(format!("dataset.test_fraction must lie in (0, 1), got {}", s.test_fraction));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Regularizer;

    const SAMPLE: &str = r#"
seed = 7
seeds = [1, 2]
output_dir = "out"

[dataset]
kind = "synth"
classes = 3
per_class = 10

[model]
filters = 4

[training]
regularizer = "or"
epochs = 50

[al]
strategies = ["random", "display_latent"]
checkpoints = [0.2, 0.4]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.run_seeds(), vec![1, 2]);
        assert_eq!(cfg.training.regularizer, Regularizer::Or);
        assert_eq!(cfg.model.filters, 4);
        assert!(matches!(&cfg.dataset, DatasetConfig::Synth(s) if s.classes == 3 && s.per_class == 10));
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let bad = SAMPLE.replace("epochs = 50", "epochs = 50\nepoch = 3");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("training"), "{err}");
        assert!(err.to_string().contains("epoch"), "{err}");
        let bad = SAMPLE.replace("per_class = 10", "per_class = 10\ncolour = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = SAMPLE.replace("\"random\"", "\"randomly\"");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("al.strategies"), "{err}");
    }

    #[test]
    fn semantic_validation() {
        let bad = SAMPLE.replace("checkpoints = [0.2, 0.4]", "checkpoints = [0.4, 0.2]");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(ConfigError::Invalid(_))));
        let bad = SAMPLE.replace("epochs = 50", "epochs = 50\nmomentum = 1.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn data_root_override() {
        let text = "seed = 1\noutput_dir = \"o\"\n[dataset]\nkind = \"sbu\"\nroot = \"/data/sbu\"\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.override_data_root(PathBuf::from("/elsewhere"));
        assert!(matches!(&cfg.dataset, DatasetConfig::Sbu(c) if c.root == Path::new("/elsewhere") && c.chunks == 4));
    }
}
