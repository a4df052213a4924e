//! Application configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::caption::{GenerationParams, HttpBackendConfig};
use crate::classifier::{ModelConfig, SslConfig};
use crate::data_io::DatasetFormat;
use crate::error::{Error, Result};
use crate::evaluation::{EvalWeights, RubricConfig};
use crate::prompt::PromptTemplates;
use crate::question::AnalyzerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset JSON used for training.
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    /// Directory image paths in the dataset are relative to; defaults to the
    /// dataset's directory.
    pub image_root: Option<PathBuf>,
    /// Lexicon TSV; the bundled lexicon when unset.
    pub lexicon: Option<PathBuf>,
    /// Extra one-per-line terms for terminology scoring.
    pub flat_terms: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: DatasetFormat::SlakeJson,
            image_root: None,
            lexicon: None,
            flat_terms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub max_inflight: usize,
    pub http: HttpBackendConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            max_inflight: 4,
            http: HttpBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub weights: EvalWeights,
    pub rubric: RubricConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            weights: EvalWeights::default(),
            rubric: RubricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    /// Checkpoint written by training and read by prediction and captioning.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub ssl: SslConfig,
    pub analyzer: AnalyzerConfig,
    pub prompt: PromptTemplates,
    pub generation: GenerationParams,
    pub backend: BackendConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint: None,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            ssl: SslConfig::default(),
            analyzer: AnalyzerConfig::default(),
            prompt: PromptTemplates::default(),
            generation: GenerationParams::default(),
            backend: BackendConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.ssl.validate()?;
        self.generation.validate()?;
        self.evaluation.weights.validate()?;
        if !(self.analyzer.sim_threshold.is_finite()) {
            return Err(Error::Config("analyzer.sim_threshold must be finite".into()));
        }
        if self.backend.max_inflight == 0 {
            return Err(Error::Config("backend.max_inflight must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Modality;

    #[test]
    fn default_round_trips() {
        let cfg = AppConfig::default();
        let text = cfg.to_toml();
        assert_eq!(AppConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn default_values() {
        let cfg = AppConfig::default();
        assert_eq!(cfg.ssl.tau, 0.95);
        let strong = cfg.ssl.strong.params_for(Some(Modality::Mri));
        assert_eq!((strong.rotation_deg, strong.translate_frac), (15.0, 0.15));
        assert_eq!(cfg.evaluation.weights, EvalWeights::default());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = AppConfig::from_toml("seed = 7\n[evaluation.weights]\nalpha1 = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.evaluation.weights.alpha1, 0.5);
        assert_eq!(cfg.evaluation.weights.alpha2, 0.25);
        assert!(AppConfig::from_toml("bogus = 1\n").is_err());
        assert!(AppConfig::from_toml("[ssl]\ntau = 1.5\n").is_err());
    }
}
