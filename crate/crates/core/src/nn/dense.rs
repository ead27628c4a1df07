use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[C, U]`
    pub weights: Tensor,
    /// `[C]`
    pub bias: Tensor,
}

impl DenseParams {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[classes, inputs]),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.classes();
        self.weights.expect_shape(&[c, x.len()], "dense weights")?;
        Ok(self
            .weights
            .data()
            .chunks_exact(x.len().max(1))
            .take(c)
            .zip(self.bias.data())
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Class probabilities `softmax(W x + b)` and the cross-entropy loss
/// `-ln p[label]`.
pub fn dense_softmax_xent(x: &[f64], p: &DenseParams, label: usize) -> Result<(Vec<f64>, f64)> {
    if label >= p.classes() {
        return Err(Error::Shape(format!(
            "label {label} out of range for {} classes",
            p.classes()
        )));
    }
    let logits = p.logits(x)?;
    let loss = -log_softmax(&logits)[label];
    Ok((softmax(&logits), loss.max(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Gradients of `scale * loss`, using `dL/dlogits = probs - onehot(label)`.
pub fn dense_softmax_xent_backward(
    x: &[f64],
    p: &DenseParams,
    probs: &[f64],
    label: usize,
    scale: f64,
) -> Result<DenseGrads> {
    let (c, u) = (p.classes(), x.len());
    if probs.len() != c || label >= c {
        return Err(Error::Shape(format!(
            "{} probabilities / label {label} for {c} classes",
            probs.len()
        )));
    }
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(k, &pk)| scale * (pk - if k == label { 1.0 } else { 0.0 }))
        .collect();
    let mut dw = vec![0.0; c * u];
    let mut dx = vec![0.0; u];
    for k in 0..c {
        let row = &p.weights.data()[k * u..(k + 1) * u];
        for j in 0..u {
            dw[k * u + j] = dlogits[k] * x[j];
            dx[j] += dlogits[k] * row[j];
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(&[u], dx)?,
        weights: Tensor::from_vec(&[c, u], dw)?,
        bias: Tensor::from_vec(&[c], dlogits)?,
    })
}
