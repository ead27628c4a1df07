use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{Mode, Tensor};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Running statistics keep this fraction of their old value per update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel mean and biased variance over every cell of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of cells each channel was averaged over; 0 for running stats.
    pub count: usize,
}

impl ChannelStats {
    /// Statistics of a batch of equally shaped tensors whose last axis is
    /// the channel axis.
    pub fn from_batch(batch: &[Tensor]) -> Result<Self> {
        let first = batch
            .first()
            .ok_or_else(|| Error::Shape("batch normalization of an empty batch".into()))?;
        let c = *first
            .shape()
            .last()
            .ok_or_else(|| Error::Shape("batch normalization of a scalar".into()))?;
        let mut mean = vec![0.0; c];
        let mut count = 0;
        for x in batch {
            if !x.same_shape(first) {
                return Err(Error::Shape(format!(
                    "batch mixes shapes {:?} and {:?}",
                    first.shape(),
                    x.shape()
                )));
            }
            for cell in x.data().chunks_exact(c) {
                for (m, v) in mean.iter_mut().zip(cell) {
                    *m += v;
                }
            }
            count += x.len() / c;
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        // Two-pass variance.
        let mut var = vec![0.0; c];
        for x in batch {
            for cell in x.data().chunks_exact(c) {
                for ((s, v), m) in var.iter_mut().zip(cell).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
        }
        for s in &mut var {
            *s /= count as f64;
        }
        Ok(Self { mean, var, count })
    }

    pub fn inv_std(&self, eps: f64) -> Vec<f64> {
        self.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect()
    }
}

/// Gradients from [`BatchNorm::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct BnBackward {
    pub input: Vec<Tensor>,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Per-channel batch normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// The statistics used in eval mode.
    pub fn running_stats(&self) -> ChannelStats {
        ChannelStats {
            mean: self.running_mean.data().to_vec(),
            var: self.running_var.data().to_vec(),
            count: 0,
        }
    }

    /// Batch statistics in train mode (requires two or more examples),
    /// running statistics in eval mode. Train mode also folds the batch
    /// statistics into the running averages.
    pub fn stats_for(&mut self, batch: &[Tensor], mode: Mode) -> Result<ChannelStats> {
        match mode {
            Mode::Train => {
                if batch.len() < 2 {
                    return Err(Error::BatchTooSmall(batch.len()));
                }
                let stats = ChannelStats::from_batch(batch)?;
                self.check_channels(stats.mean.len())?;
                self.update_running(&stats);
                Ok(stats)
            }
            Mode::Eval => {
                for x in batch {
                    self.check_channels(x.shape().last().copied().unwrap_or(0))?;
                }
                Ok(self.running_stats())
            }
        }
    }

    fn check_channels(&self, c: usize) -> Result<()> {
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch normalization over {} channels applied to {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    pub fn update_running(&mut self, stats: &ChannelStats) {
        let m = self.momentum;
        for (r, s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * s;
        }
        for (r, s) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = m * *r + (1.0 - m) * s;
        }
    }

    /// `out = gamma * (x - mean) * inv_std + beta`, channel-last.
    pub fn normalize_into(&self, x: &[f64], stats: &ChannelStats, inv_std: &[f64], out: &mut [f64]) {
        let c = self.channels();
        let (g, b) = (self.gamma.data(), self.beta.data());
        for (xc, oc) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            for j in 0..c {
                oc[j] = g[j] * (xc[j] - stats.mean[j]) * inv_std[j] + b[j];
            }
        }
    }

    pub fn normalize(&self, x: &Tensor, stats: &ChannelStats) -> Tensor {
        let inv = stats.inv_std(self.eps);
        let mut out = Tensor::zeros(x.shape());
        self.normalize_into(x.data(), stats, &inv, out.data_mut());
        out
    }

    /// Normalizes a batch. See [`Self::stats_for`] for the mode semantics.
    pub fn forward(&mut self, batch: &[Tensor], mode: Mode) -> Result<(Vec<Tensor>, ChannelStats)> {
        let stats = self.stats_for(batch, mode)?;
        let out = batch.iter().map(|x| self.normalize(x, &stats)).collect();
        Ok((out, stats))
    }

    /// Eval-mode normalization of a single input; never mutates state.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_channels(x.shape().last().copied().unwrap_or(0))?;
        Ok(self.normalize(x, &self.running_stats()))
    }

    /// Adds `sum dy * xhat` into `dgamma` and `sum dy` into `dbeta`.
    pub(crate) fn accumulate_param_grads(
        &self,
        x: &[f64],
        dy: &[f64],
        stats: &ChannelStats,
        inv_std: &[f64],
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) {
        let c = self.channels();
        for (xc, dc) in x.chunks_exact(c).zip(dy.chunks_exact(c)) {
            for j in 0..c {
                let xhat = (xc[j] - stats.mean[j]) * inv_std[j];
                dgamma[j] += dc[j] * xhat;
                dbeta[j] += dc[j];
            }
        }
    }

    /// Input gradient for one example, given the batch-wide parameter
    /// gradients. In train mode the batch mean and variance depend on every
    /// input, which adds the two correction terms.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn input_grad_into(
        &self,
        x: &[f64],
        dy: &[f64],
        stats: &ChannelStats,
        inv_std: &[f64],
        dgamma: &[f64],
        dbeta: &[f64],
        mode: Mode,
        out: &mut [f64],
    ) {
        let c = self.channels();
        let g = self.gamma.data();
        match mode {
            Mode::Train => {
                let m = stats.count as f64;
                for ((xc, dc), oc) in x.chunks_exact(c).zip(dy.chunks_exact(c)).zip(out.chunks_exact_mut(c)) {
                    for j in 0..c {
                        let xhat = (xc[j] - stats.mean[j]) * inv_std[j];
                        oc[j] = g[j] * inv_std[j] * (dc[j] - (dbeta[j] + xhat * dgamma[j]) / m);
                    }
                }
            }
            Mode::Eval => {
                for (dc, oc) in dy.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
                    for j in 0..c {
                        oc[j] = g[j] * inv_std[j] * dc[j];
                    }
                }
            }
        }
    }

    /// Gradients for a batch normalized with `stats` in `mode`.
    pub fn backward(
        &self,
        batch: &[Tensor],
        grad_out: &[Tensor],
        stats: &ChannelStats,
        mode: Mode,
    ) -> Result<BnBackward> {
        if batch.len() != grad_out.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} output gradients",
                batch.len(),
                grad_out.len()
            )));
        }
        let c = self.channels();
        let inv = stats.inv_std(self.eps);
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (x, dy) in batch.iter().zip(grad_out) {
            dy.expect_shape(x.shape(), "batch normalization output gradient")?;
            self.accumulate_param_grads(x.data(), dy.data(), stats, &inv, &mut dgamma, &mut dbeta);
        }
        let input = batch
            .iter()
            .zip(grad_out)
            .map(|(x, dy)| {
                let mut dx = Tensor::zeros(x.shape());
                self.input_grad_into(x.data(), dy.data(), stats, &inv, &dgamma, &dbeta, mode, dx.data_mut());
                dx
            })
            .collect();
        Ok(BnBackward {
            input,
            gamma: Tensor::from_vec(&[c], dgamma)?,
            beta: Tensor::from_vec(&[c], dbeta)?,
        })
    }
}
