//! Minimal layer set over `candle_core` with an explicit, ordered parameter store.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names (torchvision
//! naming for the residual backbones) so that checkpoints are stable and
//! every parameter group can be addressed individually.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Forward-pass mode; only batch normalisation distinguishes the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Trainable parameters plus non-trainable buffers (batch-norm running statistics).
pub struct ParamStore {
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
    params: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: String, tensor: Tensor, trainable: bool) -> Result<Var> {
        let var = Var::from_tensor(&tensor.to_dtype(self.dtype)?)?;
        let slot = if trainable { &mut self.params } else { &mut self.buffers };
        if slot.insert(name.clone(), var.clone()).is_some() {
            return Err(Error::Shape(format!("parameter `{name}` registered twice")));
        }
        Ok(var)
    }

    pub fn kaiming(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> Result<Var> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
        let t = Tensor::from_vec(values, shape, &self.device)?;
        self.insert(name.into(), t, true)
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64, trainable: bool) -> Result<Var> {
        let t = (Tensor::ones(shape, DType::F64, &self.device)? * value)?;
        self.insert(name.into(), t, trainable)
    }

    /// Trainable parameters in name order.
    pub fn params(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param(&self, name: &str) -> Option<&Var> {
        self.params.get(name)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|v| v.elem_count()).sum()
    }

    /// Snapshot of every parameter and buffer.
    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .chain(&self.buffers)
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites parameters and buffers from `tensors`. Every registered
    /// name must be present with a matching shape; extra names are rejected.
    pub fn load(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let expected = self.params.len() + self.buffers.len();
        if tensors.len() != expected {
            let unknown: Vec<_> = tensors
                .keys()
                .filter(|k| !self.params.contains_key(*k) && !self.buffers.contains_key(*k))
                .take(3)
                .collect();
            return Err(Error::WeightLoad(format!(
                "expected {expected} tensors, found {} (unknown: {unknown:?})",
                tensors.len()
            )));
        }
        for (name, var) in self.params.iter().chain(&self.buffers) {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::WeightLoad(format!("missing tensor `{name}`")))?;
            if t.dims() != var.dims() {
                return Err(Error::WeightLoad(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
        }
        for (name, var) in self.params.iter().chain(&self.buffers) {
            var.set(&tensors[name].to_dtype(self.dtype)?.copy()?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
    pub dilation: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            padding: 0,
            stride: 1,
            dilation: 1,
            bias: false,
        }
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }
}

pub struct Conv2d {
    weight: Var,
    bias: Option<Var>,
    spec: ConvSpec,
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec) -> Result<Self> {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let weight = store.kaiming(
            format!("{name}.weight"),
            &[spec.out_channels, spec.in_channels, spec.kernel, spec.kernel],
            fan_in,
        )?;
        let bias = if spec.bias {
            Some(store.constant(format!("{name}.bias"), &[spec.out_channels], 0.0, true)?)
        } else {
            None
        };
        Ok(Self { weight, bias, spec })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &Var {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Var> {
        self.bias.as_ref()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = &self.spec;
        let y = x.conv2d(self.weight.as_tensor(), s.padding, s.stride, s.dilation, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, s.out_channels, 1, 1))?)?),
            None => Ok(y),
        }
    }
}

pub struct BatchNorm2d {
    weight: Var,
    bias: Var,
    running_mean: Var,
    running_var: Var,
    channels: usize,
    eps: f64,
    momentum: f64,
}

impl BatchNorm2d {
    /// Identity-initialised: γ=1, β=0, running mean 0, running variance 1.
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: store.constant(format!("{name}.weight"), &[channels], 1.0, true)?,
            bias: store.constant(format!("{name}.bias"), &[channels], 0.0, true)?,
            running_mean: store.constant(format!("{name}.running_mean"), &[channels], 0.0, false)?,
            running_var: store.constant(format!("{name}.running_var"), &[channels], 1.0, false)?,
            channels,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = self.channels;
        if x.rank() != 4 || x.dim(1)? != c {
            return Err(Error::Shape(format!("batch norm over {c} channels got {:?}", x.dims())));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = x.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
                let centered = x.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
                self.update_running(&mean, &var, x.elem_count() / c)?;
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.as_tensor().reshape((1, c, 1, 1))?,
                self.running_var.as_tensor().reshape((1, c, 1, 1))?,
            ),
        };
        let normed = x.broadcast_sub(&mean)?.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let gamma = self.weight.as_tensor().reshape((1, c, 1, 1))?;
        let beta = self.bias.as_tensor().reshape((1, c, 1, 1))?;
        Ok(normed.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }

    fn update_running(&self, mean: &Tensor, var: &Tensor, count: usize) -> Result<()> {
        let m = self.momentum;
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        let mean = mean.detach().flatten_all()?;
        let var = (var.detach().flatten_all()? * unbias)?;
        let rm = ((self.running_mean.as_tensor().detach() * (1.0 - m))? + (mean * m)?)?;
        let rv = ((self.running_var.as_tensor().detach() * (1.0 - m))? + (var * m)?)?;
        self.running_mean.set(&rm)?;
        self.running_var.set(&rv)?;
        Ok(())
    }
}

pub struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Self {
            weight: store.kaiming(format!("{name}.weight"), &[out_features, in_features], in_features)?,
            bias: store.constant(format!("{name}.bias"), &[out_features], 0.0, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.as_tensor().t()?)?.broadcast_add(self.bias.as_tensor())?)
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean_keepdim(2)?.mean_keepdim(3)?)
}

/// Numerically stable log-softmax over the last dimension.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Softmax of a single logit row, computed in f64.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
