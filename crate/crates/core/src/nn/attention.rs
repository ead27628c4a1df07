//! Attention pooling: `score_t = v . tanh(W h_t)`, softmax over time, and a
//! weighted sum of the hidden states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::gemm::gemm;
use super::{softmax, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `W`, `[A, U]`.
    pub projection: Tensor,
    /// `v`, `[A]`.
    pub context: Tensor,
}

impl AttentionParams {
    pub fn zeros(units: usize, attention_dim: usize) -> Self {
        Self {
            projection: Tensor::zeros(&[attention_dim, units]),
            context: Tensor::zeros(&[attention_dim]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Weighted sum of the hidden states, `[U]`.
    pub context: Tensor,
    /// Softmax weights over time, `[T]`.
    pub weights: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    hidden: Tensor,
    /// `tanh(W h_t)`, `[T, A]`.
    activations: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub hidden: Tensor,
    pub projection: Tensor,
    pub context: Tensor,
}

pub fn attention_pool(hidden: &Tensor, p: &AttentionParams) -> Result<(AttentionOutput, AttentionCache)> {
    let &[t_len, u] = hidden.shape() else {
        return Err(Error::Shape(format!("attention expects [T, U], got {:?}", hidden.shape())));
    };
    if t_len == 0 {
        return Err(Error::Shape("attention over an empty sequence".into()));
    }
    let a = p.context.len();
    p.projection.expect_shape(&[a, u], "attention projection")?;
    let mut act = vec![0.0; t_len * a];
    // act = H W^T
    gemm(t_len, u, a, hidden.data(), false, p.projection.data(), true, 0.0, &mut act);
    for v in &mut act {
        *v = v.tanh();
    }
    let scores: Vec<f64> = act
        .chunks_exact(a)
        .map(|row| row.iter().zip(p.context.data()).map(|(x, v)| x * v).sum())
        .collect();
    let weights = softmax(&scores);
    let mut ctx = vec![0.0; u];
    for (h, w) in hidden.data().chunks_exact(u).zip(&weights) {
        for (c, x) in ctx.iter_mut().zip(h) {
            *c += w * x;
        }
    }
    Ok((
        AttentionOutput {
            context: Tensor::from_vec(&[u], ctx)?,
            weights: Tensor::from_vec(&[t_len], weights.clone())?,
        },
        AttentionCache {
            hidden: hidden.clone(),
            activations: act,
            weights,
        },
    ))
}

pub fn attention_backward(p: &AttentionParams, cache: &AttentionCache, grad_context: &Tensor) -> Result<AttentionGrads> {
    let (t_len, u) = (cache.hidden.dim(0), cache.hidden.dim(1));
    let a = p.context.len();
    grad_context.expect_shape(&[u], "attention context gradient")?;
    let dctx = grad_context.data();
    let h = cache.hidden.data();
    let mut dh = vec![0.0; t_len * u];
    let mut dweights = vec![0.0; t_len];
    for t in 0..t_len {
        let ht = &h[t * u..(t + 1) * u];
        dweights[t] = ht.iter().zip(dctx).map(|(x, g)| x * g).sum();
        for (d, g) in dh[t * u..(t + 1) * u].iter_mut().zip(dctx) {
            *d = cache.weights[t] * g;
        }
    }
    // Softmax backward.
    let mean: f64 = cache.weights.iter().zip(&dweights).map(|(w, d)| w * d).sum();
    let dscores: Vec<f64> = cache.weights.iter().zip(&dweights).map(|(w, d)| w * (d - mean)).collect();
    let v = p.context.data();
    let mut dv = vec![0.0; a];
    // dZ = dscore_t * v * (1 - act^2), [T, A]
    let mut dz = vec![0.0; t_len * a];
    for t in 0..t_len {
        let act = &cache.activations[t * a..(t + 1) * a];
        for k in 0..a {
            dv[k] += dscores[t] * act[k];
            dz[t * a + k] = dscores[t] * v[k] * (1.0 - act[k] * act[k]);
        }
    }
    let mut dw = vec![0.0; a * u];
    // dW = dZ^T H ; dH += dZ W
    gemm(a, t_len, u, &dz, true, h, false, 0.0, &mut dw);
    gemm(t_len, a, u, &dz, false, p.projection.data(), false, 1.0, &mut dh);
    Ok(AttentionGrads {
        hidden: Tensor::from_vec(&[t_len, u], dh)?,
        projection: Tensor::from_vec(&[a, u], dw)?,
        context: Tensor::from_vec(&[a], dv)?,
    })
}
