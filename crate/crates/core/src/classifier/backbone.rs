//! Residual feature extractors.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, ConvSpec, Mode, ParamStore};

/// Anything that maps a B×3×H×W image batch to a B×C×h×w feature map.
pub trait FeatureExtractor: Send + Sync {
    fn out_channels(&self) -> usize;
    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneConfig {
    /// 50-layer bottleneck residual network (torchvision layout, 2048 output channels).
    Resnet50,
    /// Small basic-block residual network for desk-scale training; one stage
    /// per width, every stage after the first halves the resolution.
    Compact { widths: Vec<usize> },
}

impl BackboneConfig {
    pub fn out_channels(&self) -> usize {
        match self {
            BackboneConfig::Resnet50 => 2048,
            BackboneConfig::Compact { widths } => widths.last().copied().unwrap_or(0),
        }
    }

    pub fn build(&self, store: &mut ParamStore) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            BackboneConfig::Resnet50 => Box::new(ResNet50::new(store)?),
            BackboneConfig::Compact { widths } => Box::new(CompactResNet::new(store, widths)?),
        })
    }
}

struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    fn new(store: &mut ParamStore, conv: &str, bn: &str, spec: ConvSpec) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(store, conv, spec)?,
            bn: BatchNorm2d::new(store, bn, spec.out_channels)?,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.bn.forward(&self.conv.forward(x)?, mode)
    }
}

struct Bottleneck {
    reduce: ConvBn,
    spatial: ConvBn,
    expand: ConvBn,
    downsample: Option<ConvBn>,
}

impl Bottleneck {
    fn new(store: &mut ParamStore, name: &str, in_c: usize, width: usize, stride: usize) -> Result<Self> {
        let out_c = width * 4;
        let downsample = if stride != 1 || in_c != out_c {
            Some(ConvBn::new(
                store,
                &format!("{name}.downsample.0"),
                &format!("{name}.downsample.1"),
                ConvSpec::new(in_c, out_c, 1).stride(stride),
            )?)
        } else {
            None
        };
        Ok(Self {
            reduce: ConvBn::new(store, &format!("{name}.conv1"), &format!("{name}.bn1"), ConvSpec::new(in_c, width, 1))?,
            spatial: ConvBn::new(
                store,
                &format!("{name}.conv2"),
                &format!("{name}.bn2"),
                ConvSpec::new(width, width, 3).padding(1).stride(stride),
            )?,
            expand: ConvBn::new(store, &format!("{name}.conv3"), &format!("{name}.bn3"), ConvSpec::new(width, out_c, 1))?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.reduce.forward(x, mode)?.relu()?;
        let y = self.spatial.forward(&y, mode)?.relu()?;
        let y = self.expand.forward(&y, mode)?;
        let shortcut = match &self.downsample {
            Some(ds) => ds.forward(x, mode)?,
            None => x.clone(),
        };
        Ok((y + shortcut)?.relu()?)
    }
}

pub struct ResNet50 {
    stem: ConvBn,
    blocks: Vec<Bottleneck>,
}

impl ResNet50 {
    const LAYOUT: [(usize, usize); 4] = [(3, 64), (4, 128), (6, 256), (3, 512)];

    pub fn new(store: &mut ParamStore) -> Result<Self> {
        let stem = ConvBn::new(store, "conv1", "bn1", ConvSpec::new(3, 64, 7).stride(2).padding(3))?;
        let mut blocks = Vec::new();
        let mut in_c = 64;
        for (stage, (depth, width)) in Self::LAYOUT.iter().enumerate() {
            for i in 0..*depth {
                let stride = if i == 0 && stage > 0 { 2 } else { 1 };
                blocks.push(Bottleneck::new(store, &format!("layer{}.{i}", stage + 1), in_c, *width, stride)?);
                in_c = width * 4;
            }
        }
        Ok(Self { stem, blocks })
    }
}

impl FeatureExtractor for ResNet50 {
    fn out_channels(&self) -> usize {
        2048
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.stem.forward(x, mode)?.relu()?;
        // post-ReLU activations are non-negative, so zero padding matches -inf padding
        let y = y.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?.max_pool2d_with_stride(3, 2)?;
        self.blocks.iter().try_fold(y, |y, b| b.forward(&y, mode))
    }
}

struct BasicBlock {
    first: ConvBn,
    second: ConvBn,
    downsample: Option<ConvBn>,
}

impl BasicBlock {
    fn new(store: &mut ParamStore, name: &str, in_c: usize, out_c: usize, stride: usize) -> Result<Self> {
        let downsample = if stride != 1 || in_c != out_c {
            Some(ConvBn::new(
                store,
                &format!("{name}.downsample.0"),
                &format!("{name}.downsample.1"),
                ConvSpec::new(in_c, out_c, 1).stride(stride),
            )?)
        } else {
            None
        };
        Ok(Self {
            first: ConvBn::new(
                store,
                &format!("{name}.conv1"),
                &format!("{name}.bn1"),
                ConvSpec::new(in_c, out_c, 3).padding(1).stride(stride),
            )?,
            second: ConvBn::new(
                store,
                &format!("{name}.conv2"),
                &format!("{name}.bn2"),
                ConvSpec::new(out_c, out_c, 3).padding(1),
            )?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.first.forward(x, mode)?.relu()?;
        let y = self.second.forward(&y, mode)?;
        let shortcut = match &self.downsample {
            Some(ds) => ds.forward(x, mode)?,
            None => x.clone(),
        };
        Ok((y + shortcut)?.relu()?)
    }
}

pub struct CompactResNet {
    stem: ConvBn,
    blocks: Vec<BasicBlock>,
    out_channels: usize,
}

impl CompactResNet {
    pub fn new(store: &mut ParamStore, widths: &[usize]) -> Result<Self> {
        let Some(&first) = widths.first() else {
            return Err(crate::Error::Config("compact backbone needs at least one width".into()));
        };
        let stem = ConvBn::new(store, "conv1", "bn1", ConvSpec::new(3, first, 3).padding(1))?;
        let mut blocks = Vec::new();
        let mut in_c = first;
        for (i, &w) in widths.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            blocks.push(BasicBlock::new(store, &format!("layer{}.0", i + 1), in_c, w, stride)?);
            in_c = w;
        }
        Ok(Self {
            stem,
            blocks,
            out_channels: in_c,
        })
    }
}

impl FeatureExtractor for CompactResNet {
    fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.stem.forward(x, mode)?.relu()?;
        self.blocks.iter().try_fold(y, |y, b| b.forward(&y, mode))
    }
}
