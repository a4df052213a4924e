use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::backbone::{BackboneConfig, FeatureExtractor};
use crate::attention::{AttentionConfig, FeatureMap, MedicalModalityAttention};
use crate::data_io::ImageSample;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{global_avg_pool, softmax_row, Linear, Mode, ParamStore};

const ATTENTION_PREFIX: &str = "attention";
const HEAD_PREFIX: &str = "head";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub attention_reduction: usize,
    /// Square input resolution in pixels.
    pub input_size: usize,
    pub pixel_mean: [f64; 3],
    pub pixel_std: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::Resnet50,
            attention_reduction: 16,
            input_size: 224,
            pixel_mean: [0.485, 0.456, 0.406],
            pixel_std: [0.229, 0.224, 0.225],
        }
    }
}

impl ModelConfig {
    /// Small residual backbone for CPU-scale experiments.
    pub fn compact(widths: Vec<usize>, input_size: usize) -> Self {
        Self {
            backbone: BackboneConfig::Compact { widths },
            attention_reduction: 4,
            input_size,
            pixel_mean: [0.5; 3],
            pixel_std: [0.25; 3],
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig::new(self.backbone.out_channels()).with_reduction(self.attention_reduction)
    }
}

/// Softmax output of the modality classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityPrediction {
    pub modality: Modality,
    pub confidence: f64,
    pub logits: [f64; 3],
}

impl ModalityPrediction {
    pub fn from_logits(logits: [f64; 3]) -> Self {
        let probs = softmax_row(&logits);
        let (index, confidence) = argmax(&probs);
        Self {
            modality: Modality::from_index(index).expect("three classes"),
            confidence,
            logits,
        }
    }
}

/// Index and value of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Backbone → modality attention → global pooling → linear head.
pub struct ModalityModel {
    config: ModelConfig,
    store: ParamStore,
    backbone: Box<dyn FeatureExtractor>,
    attention: MedicalModalityAttention,
    head: Linear,
}

/// Builds a freshly initialised model, optionally loading backbone weights
/// from a safetensors file with torchvision parameter names.
pub fn build_model(config: &ModelConfig, dtype: DType, seed: u64, pretrained: Option<&Path>) -> Result<ModalityModel> {
    let model = ModalityModel::new(config.clone(), dtype, seed)?;
    if let Some(path) = pretrained {
        model.load_backbone(path)?;
    }
    Ok(model)
}

impl ModalityModel {
    pub fn new(config: ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(dtype, seed);
        let backbone = config.backbone.build(&mut store)?;
        let attention = MedicalModalityAttention::new(&mut store, ATTENTION_PREFIX, config.attention())?;
        let head = Linear::new(&mut store, HEAD_PREFIX, backbone.out_channels(), Modality::COUNT)?;
        Ok(Self {
            config,
            store,
            backbone,
            attention,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn attention(&self) -> &MedicalModalityAttention {
        &self.attention
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    fn load_backbone(&self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let loaded = candle_core::safetensors::load_buffer(&bytes, self.store.device())
            .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
        let mut tensors = self.store.tensors();
        for (name, slot) in tensors.iter_mut() {
            if name.starts_with(ATTENTION_PREFIX) || name.starts_with(HEAD_PREFIX) {
                continue;
            }
            *slot = loaded
                .get(name)
                .cloned()
                .ok_or_else(|| Error::WeightLoad(format!("pretrained file lacks `{name}`")))?;
        }
        self.store.load(&tensors)
    }

    /// Feature map emitted by the backbone, before attention.
    pub fn features(&self, images: &Tensor, mode: Mode) -> Result<Tensor> {
        let x = self.normalize(images)?;
        self.backbone.forward(&x, mode)
    }

    fn normalize(&self, images: &Tensor) -> Result<Tensor> {
        let dims = images.dims();
        if dims.len() != 4 || dims[1] != 3 {
            return Err(Error::Shape(format!("expected B×3×H×W images, got {dims:?}")));
        }
        let dev = self.store.device();
        let mean = Tensor::new(&self.config.pixel_mean, dev)?.to_dtype(self.dtype())?.reshape((1, 3, 1, 1))?;
        let std = Tensor::new(&self.config.pixel_std, dev)?.to_dtype(self.dtype())?.reshape((1, 3, 1, 1))?;
        Ok(images.to_dtype(self.dtype())?.broadcast_sub(&mean)?.broadcast_div(&std)?)
    }

    /// Logits of shape B×3 for a B×3×H×W batch with pixel values in [0,1].
    pub fn forward(&self, images: &Tensor, mode: Mode) -> Result<Tensor> {
        let features = FeatureMap::wrap(self.features(images, mode)?);
        let attended = self.attention.forward(&features, mode)?;
        let pooled = global_avg_pool(attended.tensor())?.flatten_from(1)?;
        self.head.forward(&pooled)
    }

    /// Stacks images into a B×3×H×W tensor, resizing to the model's input size.
    pub fn batch_tensor(&self, images: &[&ImageSample]) -> Result<Tensor> {
        let size = self.config.input_size;
        let mut data = Vec::with_capacity(images.len() * 3 * size * size);
        for img in images {
            let img = img.to_rgb();
            let img = if (img.height, img.width) == (size, size) { img } else { img.resize_bilinear(size, size) };
            data.extend(img.to_chw());
        }
        Ok(Tensor::from_vec(data, (images.len(), 3, size, size), self.store.device())?.to_dtype(self.dtype())?)
    }

    /// Inference-mode prediction for one image.
    pub fn predict(&self, image: &ImageSample) -> Result<ModalityPrediction> {
        let batch = self.batch_tensor(&[image])?;
        let logits = self.forward(&batch, Mode::Eval)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        let row = &logits[0];
        Ok(ModalityPrediction::from_logits([row[0], row[1], row[2]]))
    }

    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.store.tensors()
    }

    pub fn load_tensors(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        self.store.load(tensors)
    }
}
