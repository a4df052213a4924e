//! Class-weighted, confidence-masked semi-supervised objective.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};

use super::model::argmax;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{log_softmax, softmax_row};

/// Hard pseudo-label from class probabilities: `(argmax, p)` when `p > tau`.
pub fn pseudo_label_probs(probs: &[f64], tau: f64) -> Option<(usize, f64)> {
    let (index, p) = argmax(probs);
    (p > tau).then_some((index, p))
}

/// Hard pseudo-label from raw logits.
pub fn pseudo_label(logits: &[f64], tau: f64) -> Option<(usize, f64)> {
    pseudo_label_probs(&softmax_row(logits), tau)
}

/// Inverse-frequency class weights `N / (3·N_k)`, rescaled to mean one.
pub fn compute_class_weights(labels: &[Modality]) -> Result<BTreeMap<Modality, f64>> {
    let mut counts = [0usize; Modality::COUNT];
    for m in labels {
        counts[m.index()] += 1;
    }
    if let Some(missing) = Modality::ALL.iter().find(|m| counts[m.index()] == 0) {
        return Err(Error::Data(format!("no labeled samples of class {missing}")));
    }
    let total = labels.len() as f64;
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| total / (Modality::COUNT as f64 * n as f64))
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(Modality::ALL.iter().map(|m| (*m, raw[m.index()] / mean)).collect())
}

pub(crate) fn weight_array(weights: Option<&BTreeMap<Modality, f64>>) -> Result<[f64; 3]> {
    let mut out = [1.0; 3];
    if let Some(w) = weights {
        for m in Modality::ALL {
            out[m.index()] = *w
                .get(&m)
                .ok_or_else(|| Error::Config(format!("class weight for {m} missing")))?;
        }
    }
    Ok(out)
}

/// Loss terms with a differentiable total.
pub struct SslObjective {
    pub total: Tensor,
    pub supervised: f64,
    pub unsupervised: f64,
    pub mask_rate: f64,
    /// Pseudo-label per unlabeled sample, `None` where masked out.
    pub pseudo_labels: Vec<Option<usize>>,
}

/// Scalar summary of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslLoss {
    pub total: f64,
    pub supervised: f64,
    pub unsupervised: f64,
    pub mask_rate: f64,
}

fn gather_nll(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let idx: Vec<u32> = targets.iter().map(|&t| t as u32).collect();
    let idx = Tensor::from_vec(idx, (targets.len(), 1), logits.device())?;
    Ok(log_softmax(logits)?.gather(&idx, 1)?.squeeze(1)?.neg()?)
}

/// Builds the objective
/// `mean_l w_y·CE(f(x_l), y) + λ·mean_u 1[p > τ]·CE(f(x_u^s), ŷ_u)`.
///
/// Pseudo-labels come from `weak_logits` without gradient; the unlabeled
/// mean runs over every unlabeled sample, masked ones contributing zero.
pub fn ssl_objective(
    labeled_logits: Option<&Tensor>,
    labels: &[usize],
    weak_logits: Option<&Tensor>,
    strong_logits: Option<&Tensor>,
    class_weights: &[f64; 3],
    tau: f64,
    lambda_u: f64,
) -> Result<SslObjective> {
    let mut total: Option<Tensor> = None;
    let mut supervised = 0.0;
    if let Some(logits) = labeled_logits.filter(|_| !labels.is_empty()) {
        if logits.dims() != [labels.len(), Modality::COUNT] {
            return Err(Error::Shape(format!("labeled logits {:?} for {} labels", logits.dims(), labels.len())));
        }
        let w: Vec<f64> = labels.iter().map(|&y| class_weights[y]).collect();
        let w = Tensor::from_vec(w, labels.len(), logits.device())?.to_dtype(logits.dtype())?;
        let loss = (gather_nll(logits, labels)? * w)?.mean_all()?;
        supervised = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        total = Some(loss);
    }

    let mut unsupervised = 0.0;
    let mut mask_rate = 0.0;
    let mut pseudo_labels = Vec::new();
    if let (Some(weak), Some(strong)) = (weak_logits, strong_logits) {
        if weak.dims() != strong.dims() || weak.rank() != 2 || weak.dim(1)? != Modality::COUNT {
            return Err(Error::Shape(format!("weak {:?} / strong {:?} logits", weak.dims(), strong.dims())));
        }
        let n = weak.dim(0)?;
        if n > 0 {
            let rows = weak.detach().to_dtype(DType::F64)?.to_vec2::<f64>()?;
            pseudo_labels = rows.iter().map(|r| pseudo_label(r, tau).map(|(i, _)| i)).collect();
            let kept = pseudo_labels.iter().flatten().count();
            mask_rate = kept as f64 / n as f64;
            let targets: Vec<usize> = rows.iter().map(|r| argmax(r).0).collect();
            let mask: Vec<f64> = pseudo_labels.iter().map(|p| if p.is_some() { 1.0 } else { 0.0 }).collect();
            let mask = Tensor::from_vec(mask, n, strong.device())?.to_dtype(strong.dtype())?;
            let loss = ((gather_nll(strong, &targets)? * mask)?.sum_all()? / n as f64)?;
            unsupervised = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            let scaled = (loss * lambda_u)?;
            total = Some(match total {
                Some(t) => (t + scaled)?,
                None => scaled,
            });
        }
    }

    let total = match total {
        Some(t) => t,
        None => Tensor::zeros((), DType::F64, &Device::Cpu)?,
    };
    Ok(SslObjective {
        total,
        supervised,
        unsupervised,
        mask_rate,
        pseudo_labels,
    })
}

/// Evaluates the objective on plain logit rows (f64).
pub fn ssl_loss(
    labeled: &[([f64; 3], usize)],
    unlabeled: &[([f64; 3], [f64; 3])],
    class_weights: &[f64; 3],
    tau: f64,
    lambda_u: f64,
) -> Result<SslLoss> {
    let dev = Device::Cpu;
    let rows = |v: Vec<[f64; 3]>| -> Result<Option<Tensor>> {
        if v.is_empty() {
            return Ok(None);
        }
        let n = v.len();
        Ok(Some(Tensor::from_vec(v.into_iter().flatten().collect::<Vec<_>>(), (n, 3), &dev)?))
    };
    let labels: Vec<usize> = labeled.iter().map(|(_, y)| *y).collect();
    if let Some(&bad) = labels.iter().find(|&&y| y >= Modality::COUNT) {
        return Err(Error::Data(format!("label {bad} out of range")));
    }
    let labeled_logits = rows(labeled.iter().map(|(l, _)| *l).collect())?;
    let weak = rows(unlabeled.iter().map(|(w, _)| *w).collect())?;
    let strong = rows(unlabeled.iter().map(|(_, s)| *s).collect())?;
    let obj = ssl_objective(labeled_logits.as_ref(), &labels, weak.as_ref(), strong.as_ref(), class_weights, tau, lambda_u)?;
    Ok(SslLoss {
        total: obj.total.to_dtype(DType::F64)?.to_scalar::<f64>()?,
        supervised: obj.supervised,
        unsupervised: obj.unsupervised,
        mask_rate: obj.mask_rate,
    })
}
