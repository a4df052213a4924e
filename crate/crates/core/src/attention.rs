//! Medical modality attention block.
//!
//! `out = x ⊙ (A_anatomy(x) ⊙ A_texture(x)) + M_scale(x)` where the anatomy
//! gate is a 7×7 conv/BN/ReLU stack, the texture gate a squeeze-and-excite
//! style channel gate, and `M_scale` a bank of dilated 3×3 convolutions fused
//! by a 1×1 projection. Both gates end in a sigmoid so they stay in [0,1].

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{global_avg_pool, sigmoid, BatchNorm2d, Conv2d, ConvSpec, Mode, ParamStore};

pub const ANATOMY_KERNEL: usize = 7;
pub const DILATION_RATES: [usize; 3] = [1, 2, 4];

/// B×C×H×W activation tensor with finite entries and non-zero C, H, W.
#[derive(Debug, Clone)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let dims = tensor.dims();
        if dims.len() != 4 || dims[1..].contains(&0) {
            return Err(Error::Shape(format!("feature map must be B×C×H×W with C,H,W>0, got {dims:?}")));
        }
        let finite = tensor
            .to_dtype(candle_core::DType::F64)?
            .flatten_all()?
            .to_vec1::<f64>()?
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("feature map contains non-finite entries".into()));
        }
        Ok(Self(tensor))
    }

    pub(crate) fn wrap(tensor: Tensor) -> Self {
        Self(tensor)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn dims(&self) -> &[usize] {
        self.0.dims()
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub channels: usize,
    pub reduction_ratio: usize,
    pub scale_kernel: usize,
}

impl AttentionConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            reduction_ratio: 16,
            scale_kernel: 3,
        }
    }

    pub fn with_reduction(mut self, r: usize) -> Self {
        self.reduction_ratio = r;
        self
    }

    /// Width of the texture bottleneck, never below one.
    pub fn reduced_channels(&self) -> usize {
        (self.channels / self.reduction_ratio.max(1)).max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("attention channels must be positive".into()));
        }
        if self.scale_kernel % 2 == 0 {
            return Err(Error::Config("scale kernel must be odd to preserve spatial size".into()));
        }
        Ok(())
    }
}

pub struct MedicalModalityAttention {
    config: AttentionConfig,
    anatomy_conv: Conv2d,
    anatomy_bn: BatchNorm2d,
    texture_reduce: Conv2d,
    texture_expand: Conv2d,
    scale_branches: Vec<Conv2d>,
    scale_adjust: Conv2d,
}

impl MedicalModalityAttention {
    /// Registers the block's parameters under `name` in `store`.
    pub fn new(store: &mut ParamStore, name: &str, config: AttentionConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let hidden = config.reduced_channels();
        let k = config.scale_kernel;
        let anatomy_conv = Conv2d::new(
            store,
            &format!("{name}.anatomy.conv"),
            ConvSpec::new(c, c, ANATOMY_KERNEL).padding(ANATOMY_KERNEL / 2).with_bias(),
        )?;
        let anatomy_bn = BatchNorm2d::new(store, &format!("{name}.anatomy.bn"), c)?;
        let texture_reduce = Conv2d::new(store, &format!("{name}.texture.reduce"), ConvSpec::new(c, hidden, 1).with_bias())?;
        let texture_expand = Conv2d::new(store, &format!("{name}.texture.expand"), ConvSpec::new(hidden, c, 1).with_bias())?;
        let scale_branches = DILATION_RATES
            .iter()
            .map(|&d| {
                Conv2d::new(
                    store,
                    &format!("{name}.scale.dilated{d}"),
                    ConvSpec::new(c, c, k).padding(d * (k / 2)).dilation(d).with_bias(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let scale_adjust = Conv2d::new(
            store,
            &format!("{name}.scale.adjust"),
            ConvSpec::new(DILATION_RATES.len() * c, c, 1).with_bias(),
        )?;
        Ok(Self {
            config,
            anatomy_conv,
            anatomy_bn,
            texture_reduce,
            texture_expand,
            scale_branches,
            scale_adjust,
        })
    }

    pub fn config(&self) -> &AttentionConfig {
        &self.config
    }

    fn check(&self, x: &FeatureMap) -> Result<()> {
        if x.channels() != self.config.channels {
            return Err(Error::Shape(format!(
                "attention block configured for {} channels, got {}",
                self.config.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Spatial-channel gate, B×C×H×W in [0,1].
    pub fn anatomy_attention(&self, x: &FeatureMap, mode: Mode) -> Result<FeatureMap> {
        self.check(x)?;
        let y = self.anatomy_conv.forward(x.tensor())?;
        let y = self.anatomy_bn.forward(&y, mode)?.relu()?;
        Ok(FeatureMap::wrap(sigmoid(&y)?))
    }

    /// Channel gate, B×C×1×1 in (0,1).
    pub fn texture_attention(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check(x)?;
        let pooled = global_avg_pool(x.tensor())?;
        let y = self.texture_reduce.forward(&pooled)?.relu()?;
        let y = self.texture_expand.forward(&y)?;
        Ok(FeatureMap::wrap(sigmoid(&y)?))
    }

    pub fn intrinsic_attention(&self, x: &FeatureMap, mode: Mode) -> Result<FeatureMap> {
        let anatomy = self.anatomy_attention(x, mode)?;
        let texture = self.texture_attention(x)?;
        Ok(FeatureMap::wrap(anatomy.tensor().broadcast_mul(texture.tensor())?))
    }

    /// Dilated branches concatenated along channels, then projected back to C.
    pub fn multi_scale(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check(x)?;
        let branches = self
            .scale_branches
            .iter()
            .map(|conv| conv.forward(x.tensor()))
            .collect::<Result<Vec<_>>>()?;
        let stacked = Tensor::cat(&branches, 1)?;
        Ok(FeatureMap::wrap(self.scale_adjust.forward(&stacked)?))
    }

    pub fn forward(&self, x: &FeatureMap, mode: Mode) -> Result<FeatureMap> {
        let gate = self.intrinsic_attention(x, mode)?;
        let scale = self.multi_scale(x)?;
        combine(x, &gate, &scale)
    }

    /// Raw tensors of the dilated branches, for inspection.
    pub fn scale_branch_outputs(&self, x: &FeatureMap) -> Result<Vec<Tensor>> {
        self.check(x)?;
        self.scale_branches.iter().map(|c| c.forward(x.tensor())).collect()
    }
}

/// `x ⊙ gate + scale`, broadcasting the gate over spatial dims if needed.
pub fn combine(x: &FeatureMap, gate: &FeatureMap, scale: &FeatureMap) -> Result<FeatureMap> {
    if scale.dims() != x.dims() {
        return Err(Error::Shape(format!("scale branch {:?} vs input {:?}", scale.dims(), x.dims())));
    }
    let gated = x.tensor().broadcast_mul(gate.tensor())?;
    Ok(FeatureMap::wrap((gated + scale.tensor())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn block(c: usize, r: usize) -> (ParamStore, MedicalModalityAttention) {
        let mut store = ParamStore::new(DType::F64, 7);
        let attn = MedicalModalityAttention::new(&mut store, "attn", AttentionConfig::new(c).with_reduction(r)).unwrap();
        (store, attn)
    }

    fn randn(dims: &[usize]) -> FeatureMap {
        FeatureMap::new(Tensor::randn(0f64, 1.0, dims, &Device::Cpu).unwrap()).unwrap()
    }

    fn zero_params(store: &ParamStore, prefix: &str) {
        for (name, var) in store.params() {
            if name.starts_with(prefix) && !name.ends_with("bn.weight") {
                var.set(&var.zeros_like().unwrap()).unwrap();
            }
        }
    }

    fn min_max(t: &Tensor) -> (f64, f64) {
        let v = t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    #[test]
    fn anatomy_shape_and_range() {
        let (_s, attn) = block(8, 16);
        let x = randn(&[2, 8, 16, 16]);
        for mode in [Mode::Train, Mode::Eval] {
            let g = attn.anatomy_attention(&x, mode).unwrap();
            assert_eq!(g.dims(), &[2, 8, 16, 16]);
            let (lo, hi) = min_max(g.tensor());
            assert!(lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn anatomy_of_zero_input_is_half() {
        let (store, attn) = block(8, 16);
        // conv bias is zero-initialised; BN identity-initialised
        assert!(store.params().any(|(n, _)| n == "attn.anatomy.conv.bias"));
        let x = FeatureMap::new(Tensor::zeros((2, 8, 5, 5), DType::F64, &Device::Cpu).unwrap()).unwrap();
        let g = attn.anatomy_attention(&x, Mode::Eval).unwrap();
        let (lo, hi) = min_max(g.tensor());
        assert_eq!((lo, hi), (0.5, 0.5));
    }

    #[test]
    fn texture_widths() {
        let (store, attn) = block(8, 4);
        assert_eq!(attn.config().reduced_channels(), 2);
        assert_eq!(store.param("attn.texture.reduce.weight").unwrap().dims(), &[2, 8, 1, 1]);
        let g = attn.texture_attention(&randn(&[2, 8, 16, 16])).unwrap();
        assert_eq!(g.dims(), &[2, 8, 1, 1]);
        let (lo, hi) = min_max(g.tensor());
        assert!(lo > 0.0 && hi < 1.0);
        // reduction wider than channels clamps to one
        assert_eq!(AttentionConfig::new(4).with_reduction(16).reduced_channels(), 1);
    }

    #[test]
    fn pooling_constant_channels_is_exact() {
        let data: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| ((i / 16) as f64) * 0.37).collect();
        let x = Tensor::from_vec(data, (2, 3, 4, 4), &Device::Cpu).unwrap();
        let pooled = global_avg_pool(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (i, p) in pooled.iter().enumerate() {
            assert_eq!(*p, i as f64 * 0.37);
        }
    }

    #[test]
    fn intrinsic_products() {
        let dev = Device::Cpu;
        let anatomy = Tensor::randn(0f64, 1.0, (1, 2, 3, 3), &dev).unwrap();
        let ones = Tensor::ones((1, 2, 1, 1), DType::F64, &dev).unwrap();
        assert_eq!(
            anatomy.broadcast_mul(&ones).unwrap().to_vec3::<f64>().ok(),
            anatomy.to_vec3::<f64>().ok()
        );

        // zeroed texture weights: texture gate 0.5; zeroed anatomy conv: anatomy gate 0.5
        let (store, attn) = block(4, 2);
        zero_params(&store, "attn.anatomy");
        zero_params(&store, "attn.texture");
        let g = attn.intrinsic_attention(&randn(&[2, 4, 6, 6]), Mode::Eval).unwrap();
        let (lo, hi) = min_max(g.tensor());
        assert_eq!((lo, hi), (0.25, 0.25));
    }

    #[test]
    fn multi_scale_shapes_and_linearity() {
        let (store, attn) = block(8, 16);
        let x = randn(&[2, 8, 16, 16]);
        assert_eq!(attn.multi_scale(&x).unwrap().dims(), &[2, 8, 16, 16]);
        for branch in attn.scale_branch_outputs(&x).unwrap() {
            assert_eq!(branch.dims(), &[2, 8, 16, 16]);
        }
        zero_params(&store, "attn.scale");
        let (lo, hi) = min_max(attn.multi_scale(&x).unwrap().tensor());
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn forward_identity_cases() {
        let dev = Device::Cpu;
        let x = randn(&[2, 3, 5, 5]);
        let zero = FeatureMap::wrap(Tensor::zeros((2, 3, 5, 5), DType::F64, &dev).unwrap());
        let ones = FeatureMap::wrap(Tensor::ones((2, 3, 5, 5), DType::F64, &dev).unwrap());
        let half = FeatureMap::wrap(Tensor::full(0.5f64, (2, 3, 5, 5), &dev).unwrap());
        let out = combine(&x, &ones, &zero).unwrap();
        assert_eq!(out.tensor().to_vec3::<f64>().ok(), x.tensor().to_vec3::<f64>().ok());
        let out = combine(&x, &half, &zero).unwrap();
        let expect = (x.tensor() * 0.5).unwrap();
        assert_eq!(out.tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap(), expect.flatten_all().unwrap().to_vec1::<f64>().unwrap());
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let (_s, attn) = block(8, 16);
        let x = randn(&[1, 4, 8, 8]);
        assert!(matches!(attn.forward(&x, Mode::Eval), Err(Error::Shape(_))));
        assert!(matches!(attn.texture_attention(&x), Err(Error::Shape(_))));
        assert!(matches!(attn.multi_scale(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn feature_map_validation() {
        let dev = Device::Cpu;
        assert!(FeatureMap::new(Tensor::zeros((2, 3), DType::F64, &dev).unwrap()).is_err());
        assert!(FeatureMap::new(Tensor::zeros((1, 0, 2, 2), DType::F64, &dev).unwrap()).is_err());
        let nan = Tensor::full(f64::NAN, (1, 1, 2, 2), &dev).unwrap();
        assert!(FeatureMap::new(nan).is_err());
    }

    #[test]
    fn eval_forward_is_bit_deterministic() {
        let (_s, attn) = block(4, 2);
        let x = randn(&[2, 4, 8, 8]);
        let a = attn.forward(&x, Mode::Eval).unwrap().into_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let b = attn.forward(&x, Mode::Eval).unwrap().into_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
