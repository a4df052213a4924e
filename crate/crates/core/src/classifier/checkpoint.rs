//! Single-file checkpoints: safetensors weights with the configuration
//! snapshot, epoch, metrics and format version in the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::model::{ModalityModel, ModalityPrediction, ModelConfig};
use super::train::SslConfig;
use crate::data_io::ImageSample;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub ssl: Option<SslConfig>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: CheckpointConfig,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Rewrites the JSON header with sorted keys so equal checkpoints are
/// byte-identical files.
fn canonical_header(bytes: Vec<u8>) -> Result<Vec<u8>> {
    let bad = |m: &str| Error::Checkpoint(format!("malformed serialised header: {m}"));
    let len_bytes: [u8; 8] = bytes.get(..8).and_then(|b| b.try_into().ok()).ok_or_else(|| bad("short buffer"))?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    let header = bytes.get(8..8 + len).ok_or_else(|| bad("truncated"))?;
    let value: serde_json::Value = serde_json::from_slice(header).map_err(|e| bad(&e.to_string()))?;
    let mut json = serde_json::to_vec(&value).map_err(|e| bad(&e.to_string()))?;
    json.resize(json.len().div_ceil(8) * 8, b' ');
    let mut out = Vec::with_capacity(8 + json.len() + bytes.len() - 8 - len);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[8 + len..]);
    Ok(out)
}

impl Checkpoint {
    pub fn from_model(model: &ModalityModel, ssl: Option<SslConfig>, epoch: usize, metrics: BTreeMap<String, f64>) -> Self {
        Self {
            config: CheckpointConfig {
                model: model.config().clone(),
                ssl,
            },
            epoch,
            metrics,
            tensors: model.tensors().into_iter().map(|(k, v)| (k, v.copy().expect("cpu copy"))).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let config = serde_json::to_string(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let metrics = serde_json::to_string(&self.metrics).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let metadata: HashMap<String, String> = [
            ("format_version".to_string(), FORMAT_VERSION.to_string()),
            ("config".to_string(), config),
            ("epoch".to_string(), self.epoch.to_string()),
            ("metrics".to_string(), metrics),
        ]
        .into_iter()
        .collect();
        let bytes = safetensors::serialize(self.tensors.iter(), Some(metadata))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        std::fs::write(path, canonical_header(bytes)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = safetensors::SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let meta = header
            .metadata()
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("missing metadata header".into()))?;
        let field = |key: &str| {
            meta.get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata field `{key}`")))
        };
        let version = field("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let config = serde_json::from_str(field("config")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let epoch = field("epoch")?
            .parse()
            .map_err(|_| Error::Checkpoint("epoch is not an integer".into()))?;
        let metrics = serde_json::from_str(field("metrics")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let tensors = candle_core::safetensors::load_buffer(bytes, &Device::Cpu)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .into_iter()
            .collect();
        Ok(Self {
            config,
            epoch,
            metrics,
            tensors,
        })
    }

    fn dtype(&self) -> DType {
        self.tensors.values().next().map(|t| t.dtype()).unwrap_or(DType::F32)
    }

    /// Rebuilds the model described by the snapshot and loads the weights.
    pub fn restore(&self) -> Result<ModalityModel> {
        let model = ModalityModel::new(self.config.model.clone(), self.dtype(), 0)?;
        model
            .load_tensors(&self.tensors)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(model)
    }
}

/// Inference-only view of a checkpoint.
pub struct ModalityClassifier {
    model: ModalityModel,
}

impl ModalityClassifier {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: checkpoint.restore()?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn model(&self) -> &ModalityModel {
        &self.model
    }

    pub fn predict(&self, image: &ImageSample) -> Result<ModalityPrediction> {
        self.model.predict(image)
    }
}

/// One-shot prediction against a checkpoint.
pub fn predict(image: &ImageSample, checkpoint: &Checkpoint) -> Result<ModalityPrediction> {
    ModalityClassifier::from_checkpoint(checkpoint)?.predict(image)
}
