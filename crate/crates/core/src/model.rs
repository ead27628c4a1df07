//! The attentive CNN+LSTM classifier.
//!
//! Four local feature learning blocks (LFLBs: conv 3x3 same-padding, batch
//! normalization, ELU, max pooling) shrink a `[mels, frames, 1]` log-mel
//! input by the product of the pool sizes on both axes. The remaining
//! frequency rows are concatenated into the feature axis to give a
//! `[T, D]` sequence for the LSTM; attention pooling collapses the LSTM
//! states into one utterance vector, and a dense softmax layer produces
//! class probabilities.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::MelSpectrogram;
use crate::fingerprint::fnv64;
use crate::nn::conv::conv2d_backward_accumulate;
use crate::nn::{
    self, attention_backward, attention_pool, conv2d, dense_softmax_xent,
    dense_softmax_xent_backward, elu_derivative, elu_scalar, lstm_backward, lstm_forward,
    AttentionCache, AttentionParams, BatchNorm, ChannelStats, ConvSpec, DenseParams, LstmCache,
    LstmParams, Mode, Tensor,
};
use crate::{EmotionLabel, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Input height (mel bands).
    pub n_mels: usize,
    /// Input width (frames).
    pub frames: usize,
    /// Convolution kernel count per LFLB.
    pub kernels: Vec<usize>,
    /// Square convolution kernel side.
    pub kernel_size: usize,
    /// Square max-pool window (and stride) per LFLB.
    pub pools: Vec<usize>,
    pub lstm_units: usize,
    pub attention_units: usize,
    pub classes: usize,
    pub elu_alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            frames: 1280,
            kernels: vec![64, 64, 128, 128],
            kernel_size: 3,
            pools: vec![2, 2, 4, 4],
            lstm_units: 128,
            attention_units: 128,
            classes: EmotionLabel::COUNT,
            elu_alpha: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn pooling_factor(&self) -> usize {
        self.pools.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.kernels.is_empty() || self.kernels.len() != self.pools.len() {
            return bad(format!(
                "{} kernel counts for {} pool sizes; need one of each per block",
                self.kernels.len(),
                self.pools.len()
            ));
        }
        if self.kernels.contains(&0) || self.pools.contains(&0) {
            return bad("kernel counts and pool sizes must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size = {} must be odd", self.kernel_size));
        }
        let factor = self.pooling_factor();
        for (name, dim) in [("n_mels", self.n_mels), ("frames", self.frames)] {
            if dim == 0 || dim % factor != 0 {
                return bad(format!(
                    "{name} = {dim} is not divisible by the total pooling factor {factor}"
                ));
            }
        }
        if self.classes != EmotionLabel::COUNT {
            return bad(format!(
                "classes = {} but there are {} emotion labels",
                self.classes,
                EmotionLabel::COUNT
            ));
        }
        if self.lstm_units == 0 || self.attention_units == 0 {
            return bad("lstm_units and attention_units must be positive".into());
        }
        if !(self.elu_alpha > 0.0 && self.elu_alpha.is_finite()) {
            return bad(format!("elu_alpha = {} must be positive", self.elu_alpha));
        }
        Ok(())
    }

    /// `[height, width, channels]` after the last LFLB.
    pub fn lflb_output_shape(&self) -> [usize; 3] {
        let f = self.pooling_factor();
        [
            self.n_mels / f,
            self.frames / f,
            self.kernels.last().copied().unwrap_or(0),
        ]
    }

    /// Number of LSTM steps.
    pub fn sequence_len(&self) -> usize {
        self.lflb_output_shape()[1]
    }

    /// Features per LSTM step: remaining frequency rows times channels.
    pub fn sequence_features(&self) -> usize {
        let [h, _, c] = self.lflb_output_shape();
        h * c
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.n_mels, self.frames, 1]
    }

    /// Canonical one-line description; hashed into the fingerprint.
    pub fn describe(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "attentive-cnn-lstm;n_mels={};frames={};kernels={};kernel_size={};pools={};lstm_units={};attention_units={};classes={};elu_alpha={:e}",
            self.n_mels,
            self.frames,
            list(&self.kernels),
            self.kernel_size,
            list(&self.pools),
            self.lstm_units,
            self.attention_units,
            self.classes,
            self.elu_alpha
        )
    }

    /// Architecture fingerprint recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        format!("arch-{:016x}", fnv64(self.describe().as_bytes()))
    }
}

/// Parameters of one conv / batch-norm / ELU / max-pool block.
#[derive(Debug, Clone, PartialEq)]
pub struct LflbParams {
    /// `[k, k, Cin, Cout]`
    pub kernels: Tensor,
    /// `[Cout]`
    pub bias: Tensor,
    pub bn: BatchNorm,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub blocks: Vec<LflbParams>,
    pub lstm: LstmParams,
    pub attention: AttentionParams,
    pub dense: DenseParams,
}

/// Gradients for [`ModelParams::trainable`], in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub tensors: Vec<Tensor>,
}

impl ModelGrads {
    pub fn refs(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }
}

/// Which internal representation [`ModelParams::embed`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingStage {
    /// LSTM hidden states, `[T, U]`, time-major.
    PostLstm,
    /// Attention-pooled utterance vector, `[U]`.
    PostAttention,
}

impl EmbeddingStage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PostLstm => "post_lstm",
            Self::PostAttention => "post_attention",
        }
    }
}

impl FromStr for EmbeddingStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "post_lstm" => Ok(Self::PostLstm),
            "post_attention" => Ok(Self::PostAttention),
            other => Err(Error::UnknownStage(other.to_string())),
        }
    }
}

struct BlockCache {
    inputs: Vec<Tensor>,
    conv_out: Vec<Tensor>,
    stats: ChannelStats,
    argmax: Vec<Vec<u32>>,
}

struct ExampleCache {
    sequence_shape: [usize; 3],
    lstm: LstmCache,
    attention: AttentionCache,
    context: Vec<f64>,
}

/// Output of [`ModelParams::forward`]: probabilities plus everything the
/// backward pass needs.
pub struct ForwardPass {
    pub probs: Vec<Vec<f64>>,
    mode: Mode,
    blocks: Vec<BlockCache>,
    examples: Vec<ExampleCache>,
}

impl ForwardPass {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.probs.len()
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, labels: &[usize]) -> Result<f64> {
        check_labels(labels, self.probs.len())?;
        let total: f64 = self
            .probs
            .iter()
            .zip(labels)
            .map(|(p, &l)| -p[l].ln())
            .sum();
        Ok(total / labels.len() as f64)
    }
}

fn check_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= EmotionLabel::COUNT) {
        return Err(Error::Shape(format!("label index {l} out of range")));
    }
    Ok(())
}

/// Converts a spectrogram to the `[mels, frames, 1]` network input.
pub fn input_tensor(spec: &MelSpectrogram) -> Tensor {
    Tensor::from_vec(&[spec.n_mels(), spec.n_frames(), 1], spec.values().to_vec())
        .expect("spectrogram values fill its shape")
}

/// `[H, T, C]` block output to `[T, H * C]`, frequency rows outermost in
/// the feature axis.
fn to_sequence(x: &Tensor) -> Tensor {
    let (h, t, c) = (x.dim(0), x.dim(1), x.dim(2));
    let mut seq = vec![0.0; t * h * c];
    for row in 0..h {
        for step in 0..t {
            let src = &x.data()[(row * t + step) * c..][..c];
            seq[step * h * c + row * c..][..c].copy_from_slice(src);
        }
    }
    Tensor::from_vec(&[t, h * c], seq).expect("sizes agree")
}

fn from_sequence(seq: &Tensor, shape: [usize; 3]) -> Tensor {
    let [h, t, c] = shape;
    let mut x = vec![0.0; h * t * c];
    for row in 0..h {
        for step in 0..t {
            let src = &seq.data()[step * h * c + row * c..][..c];
            x[(row * t + step) * c..][..c].copy_from_slice(src);
        }
    }
    Tensor::from_vec(&shape, x).expect("sizes agree")
}

impl LflbParams {
    fn conv_spec() -> ConvSpec {
        ConvSpec::default()
    }

    /// Batch norm, ELU and max pooling of one conv output, fused. The
    /// per-channel affine map and ELU are both monotone increasing in the
    /// normalized value, so each window's winner is chosen on the normalized
    /// values and only the winner goes through the ELU. This matches pooling
    /// the ELU output except where two distinct normalized values round to
    /// the same ELU value deep in its saturated tail, where the gradient is
    /// negligible anyway.
    fn activate(&self, z: &Tensor, stats: &ChannelStats, inv_std: &[f64], alpha: f64) -> Result<nn::PoolOutput> {
        let &[h, w, c] = z.shape() else {
            return Err(Error::Shape(format!("block expects [H, W, C], got {:?}", z.shape())));
        };
        let p = self.pool;
        if h % p != 0 || w % p != 0 {
            return Err(Error::Shape(format!("maxpool window {p}x{p} does not divide input {h}x{w}")));
        }
        let (oh, ow) = (h / p, w / p);
        let (g, b) = (self.bn.gamma.data(), self.bn.beta.data());
        let x = z.data();
        let mut best = vec![0.0; c];
        let mut out = vec![0.0; oh * ow * c];
        let mut argmax = vec![0u32; oh * ow * c];
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (oy * ow + ox) * c;
                for dy in 0..p {
                    for dx in 0..p {
                        let i = ((oy * p + dy) * w + ox * p + dx) * c;
                        let first = dy == 0 && dx == 0;
                        for ch in 0..c {
                            let y = g[ch] * (x[i + ch] - stats.mean[ch]) * inv_std[ch] + b[ch];
                            if first || y > best[ch] {
                                best[ch] = y;
                                argmax[o + ch] = (i + ch) as u32;
                            }
                        }
                    }
                }
                for ch in 0..c {
                    out[o + ch] = elu_scalar(best[ch], alpha);
                }
            }
        }
        Ok(nn::PoolOutput {
            output: Tensor::from_vec(&[oh, ow, c], out)?,
            argmax,
        })
    }

    /// Gradient w.r.t. the batch-norm output at each pooling winner, given
    /// the gradient w.r.t. the pooled block output. Also accumulates the
    /// batch-norm parameter gradients, which only see the winners.
    #[allow(clippy::too_many_arguments)]
    fn winner_grads(
        &self,
        z: &Tensor,
        argmax: &[u32],
        grad_pooled: &Tensor,
        stats: &ChannelStats,
        inv_std: &[f64],
        alpha: f64,
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) -> Vec<f64> {
        let c = self.bn.channels();
        let (g, b) = (self.bn.gamma.data(), self.bn.beta.data());
        argmax
            .iter()
            .zip(grad_pooled.data())
            .map(|(&i, &d)| {
                let i = i as usize;
                let ch = i % c;
                let xhat = (z.data()[i] - stats.mean[ch]) * inv_std[ch];
                let dy = d * elu_derivative(g[ch] * xhat + b[ch], alpha);
                dgamma[ch] += dy * xhat;
                dbeta[ch] += dy;
                dy
            })
            .collect()
    }

    /// Gradient w.r.t. the conv output of one example, from its winner
    /// gradients and the batch-wide parameter gradients.
    #[allow(clippy::too_many_arguments)]
    fn conv_output_grad(
        &self,
        z: &Tensor,
        argmax: &[u32],
        winners: &[f64],
        stats: &ChannelStats,
        inv_std: &[f64],
        dgamma: &[f64],
        dbeta: &[f64],
        mode: Mode,
        dz: &mut [f64],
    ) {
        let c = self.bn.channels();
        let gi: Vec<f64> = self.bn.gamma.data().iter().zip(inv_std).map(|(g, s)| g * s).collect();
        match mode {
            Mode::Train => {
                // Every input moves the batch mean and variance.
                let m = stats.count as f64;
                for (zc, oc) in z.data().chunks_exact(c).zip(dz.chunks_exact_mut(c)) {
                    for j in 0..c {
                        let xhat = (zc[j] - stats.mean[j]) * inv_std[j];
                        oc[j] = -gi[j] * (dbeta[j] + xhat * dgamma[j]) / m;
                    }
                }
            }
            Mode::Eval => dz.fill(0.0),
        }
        for (&i, &d) in argmax.iter().zip(winners) {
            let i = i as usize;
            dz[i] += gi[i % c] * d;
        }
    }

    fn eval(&self, x: &Tensor, alpha: f64) -> Result<Tensor> {
        let z = conv2d(x, &self.kernels, Some(&self.bias), Self::conv_spec())?;
        let stats = self.bn.running_stats();
        let inv = stats.inv_std(self.bn.eps);
        Ok(self.activate(&z, &stats, &inv, alpha)?.output)
    }
}

impl ModelParams {
    /// Allocates and initializes every tensor from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let mut blocks = Vec::with_capacity(config.kernels.len());
        let mut cin = 1;
        for (&cout, &pool) in config.kernels.iter().zip(&config.pools) {
            blocks.push(LflbParams {
                kernels: nn::init::he_uniform(&mut rng, &[k, k, cin, cout], k * k * cin),
                bias: Tensor::zeros(&[cout]),
                bn: BatchNorm::new(cout),
                pool,
            });
            cin = cout;
        }
        let (d, u, a, c) = (
            config.sequence_features(),
            config.lstm_units,
            config.attention_units,
            config.classes,
        );
        let mut lstm = LstmParams {
            input_weights: nn::init::fan_in_uniform(&mut rng, &[d, 4 * u], u),
            recurrent_weights: nn::init::fan_in_uniform(&mut rng, &[u, 4 * u], u),
            bias: Tensor::zeros(&[4 * u]),
        };
        lstm.bias.data_mut()[u..2 * u].fill(1.0);
        let attention = AttentionParams {
            projection: nn::init::fan_in_uniform(&mut rng, &[a, u], u),
            context: nn::init::fan_in_uniform(&mut rng, &[a], a),
        };
        let dense = DenseParams {
            weights: nn::init::fan_in_uniform(&mut rng, &[c, u], u),
            bias: Tensor::zeros(&[c]),
        };
        Ok(Self {
            config: config.clone(),
            blocks,
            lstm,
            attention,
            dense,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every tensor with a stable name, including batch-norm running
    /// statistics, in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("lflb{i}.conv.kernels"), &b.kernels));
            out.push((format!("lflb{i}.conv.bias"), &b.bias));
            out.push((format!("lflb{i}.bn.gamma"), &b.bn.gamma));
            out.push((format!("lflb{i}.bn.beta"), &b.bn.beta));
            out.push((format!("lflb{i}.bn.running_mean"), &b.bn.running_mean));
            out.push((format!("lflb{i}.bn.running_var"), &b.bn.running_var));
        }
        out.push(("lstm.input_weights".into(), &self.lstm.input_weights));
        out.push(("lstm.recurrent_weights".into(), &self.lstm.recurrent_weights));
        out.push(("lstm.bias".into(), &self.lstm.bias));
        out.push(("attention.projection".into(), &self.attention.projection));
        out.push(("attention.context".into(), &self.attention.context));
        out.push(("dense.weights".into(), &self.dense.weights));
        out.push(("dense.bias".into(), &self.dense.bias));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("lflb{i}.conv.kernels"), &mut b.kernels));
            out.push((format!("lflb{i}.conv.bias"), &mut b.bias));
            out.push((format!("lflb{i}.bn.gamma"), &mut b.bn.gamma));
            out.push((format!("lflb{i}.bn.beta"), &mut b.bn.beta));
            out.push((format!("lflb{i}.bn.running_mean"), &mut b.bn.running_mean));
            out.push((format!("lflb{i}.bn.running_var"), &mut b.bn.running_var));
        }
        out.push(("lstm.input_weights".into(), &mut self.lstm.input_weights));
        out.push(("lstm.recurrent_weights".into(), &mut self.lstm.recurrent_weights));
        out.push(("lstm.bias".into(), &mut self.lstm.bias));
        out.push(("attention.projection".into(), &mut self.attention.projection));
        out.push(("attention.context".into(), &mut self.attention.context));
        out.push(("dense.weights".into(), &mut self.dense.weights));
        out.push(("dense.bias".into(), &mut self.dense.bias));
        out
    }

    fn is_trainable(name: &str) -> bool {
        !name.contains(".running_")
    }

    /// Trainable tensors (everything except running statistics).
    pub fn trainable(&self) -> Vec<&Tensor> {
        self.named_tensors()
            .into_iter()
            .filter(|(n, _)| Self::is_trainable(n))
            .map(|(_, t)| t)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|(n, _)| Self::is_trainable(n))
            .map(|(_, t)| t)
            .collect()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.named_tensors()
            .into_iter()
            .filter(|(n, _)| Self::is_trainable(n))
            .map(|(n, _)| n)
            .collect()
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Human-readable layer table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, t) in self.named_tensors() {
            let _ = writeln!(s, "{name:<28} {:?}", t.shape());
        }
        let _ = writeln!(s, "trainable parameters: {}", self.parameter_count());
        s
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_shape(&self.config.input_shape(), "model input")
    }

    /// Runs a batch through the network. In train mode batch normalization
    /// uses batch statistics (so at least two examples are needed) and
    /// updates its running averages; eval mode uses the running averages.
    pub fn forward(&mut self, batch: &[&Tensor], mode: Mode) -> Result<ForwardPass> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for x in batch {
            self.check_input(x)?;
        }
        let alpha = self.config.elu_alpha;
        let mut current: Vec<Tensor> = batch.iter().map(|&x| x.clone()).collect();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let conv_out = current
                .iter()
                .map(|x| conv2d(x, &block.kernels, Some(&block.bias), LflbParams::conv_spec()))
                .collect::<Result<Vec<_>>>()?;
            let stats = block.bn.stats_for(&conv_out, mode)?;
            let inv = stats.inv_std(block.bn.eps);
            let mut next = Vec::with_capacity(conv_out.len());
            let mut argmax = Vec::with_capacity(conv_out.len());
            for z in &conv_out {
                let pooled = block.activate(z, &stats, &inv, alpha)?;
                next.push(pooled.output);
                argmax.push(pooled.argmax);
            }
            caches.push(BlockCache {
                inputs: core::mem::replace(&mut current, next),
                conv_out,
                stats,
                argmax,
            });
        }
        let mut probs = Vec::with_capacity(batch.len());
        let mut examples = Vec::with_capacity(batch.len());
        for x in &current {
            let (p, cache) = self.head_forward(x)?;
            probs.push(p);
            examples.push(cache);
        }
        Ok(ForwardPass {
            probs,
            mode,
            blocks: caches,
            examples,
        })
    }

    /// LSTM, attention and dense layers for one block output.
    fn head_forward(&self, block_out: &Tensor) -> Result<(Vec<f64>, ExampleCache)> {
        let shape = [block_out.dim(0), block_out.dim(1), block_out.dim(2)];
        let seq = to_sequence(block_out);
        let (hidden, lstm) = lstm_forward(&seq, &self.lstm)?;
        let (att, attention) = attention_pool(&hidden, &self.attention)?;
        let context = att.context.into_data();
        let (probs, _) = dense_softmax_xent(&context, &self.dense, 0)?;
        Ok((
            probs,
            ExampleCache {
                sequence_shape: shape,
                lstm,
                attention,
                context,
            },
        ))
    }

    /// Mean cross-entropy loss over the batch and its gradient for every
    /// trainable tensor.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<(f64, ModelGrads)> {
        check_labels(labels, pass.batch_size())?;
        if pass.blocks.len() != self.blocks.len() {
            return Err(Error::Shape("forward pass does not belong to this model".into()));
        }
        let loss = pass.loss(labels)?;
        let n = pass.batch_size();
        let scale = 1.0 / n as f64;
        let alpha = self.config.elu_alpha;

        let mut d_dense_w = Tensor::zeros(self.dense.weights.shape());
        let mut d_dense_b = Tensor::zeros(self.dense.bias.shape());
        let mut d_att_w = Tensor::zeros(self.attention.projection.shape());
        let mut d_att_v = Tensor::zeros(self.attention.context.shape());
        let mut d_lstm_x = Tensor::zeros(self.lstm.input_weights.shape());
        let mut d_lstm_h = Tensor::zeros(self.lstm.recurrent_weights.shape());
        let mut d_lstm_b = Tensor::zeros(self.lstm.bias.shape());

        // Gradient w.r.t. each example's output of the current block.
        let mut grad_out = Vec::with_capacity(n);
        for ((ex, probs), &label) in pass.examples.iter().zip(&pass.probs).zip(labels) {
            let dense = dense_softmax_xent_backward(&ex.context, &self.dense, probs, label, scale)?;
            d_dense_w.add_assign(&dense.weights)?;
            d_dense_b.add_assign(&dense.bias)?;
            let att = attention_backward(&self.attention, &ex.attention, &dense.input)?;
            d_att_w.add_assign(&att.projection)?;
            d_att_v.add_assign(&att.context)?;
            let lstm = lstm_backward(&self.lstm, &ex.lstm, &att.hidden)?;
            d_lstm_x.add_assign(&lstm.input_weights)?;
            d_lstm_h.add_assign(&lstm.recurrent_weights)?;
            d_lstm_b.add_assign(&lstm.bias)?;
            grad_out.push(from_sequence(&lstm.input, ex.sequence_shape));
        }

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (b, (block, cache)) in self.blocks.iter().zip(&pass.blocks).enumerate().rev() {
            let c = block.bn.channels();
            let inv = cache.stats.inv_std(block.bn.eps);
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            let winners: Vec<Vec<f64>> = cache
                .conv_out
                .iter()
                .zip(&cache.argmax)
                .zip(&grad_out)
                .map(|((z, argmax), g)| {
                    block.winner_grads(z, argmax, g, &cache.stats, &inv, alpha, &mut dgamma, &mut dbeta)
                })
                .collect();
            let mut dk = Tensor::zeros(block.kernels.shape());
            let mut dbias = Tensor::zeros(block.bias.shape());
            let mut next_grads = Vec::with_capacity(if b > 0 { n } else { 0 });
            let mut dz = Tensor::zeros(cache.conv_out[0].shape());
            for (((x, z), argmax), win) in cache
                .inputs
                .iter()
                .zip(&cache.conv_out)
                .zip(&cache.argmax)
                .zip(&winners)
            {
                block.conv_output_grad(
                    z,
                    argmax,
                    win,
                    &cache.stats,
                    &inv,
                    &dgamma,
                    &dbeta,
                    pass.mode,
                    dz.data_mut(),
                );
                let mut dx = (b > 0).then(|| Tensor::zeros(x.shape()));
                conv2d_backward_accumulate(
                    x,
                    &block.kernels,
                    &dz,
                    LflbParams::conv_spec(),
                    dk.data_mut(),
                    dbias.data_mut(),
                    dx.as_mut().map(|t| t.data_mut()),
                )?;
                if let Some(dx) = dx {
                    next_grads.push(dx);
                }
            }
            block_grads.push([
                dk,
                dbias,
                Tensor::from_vec(&[c], dgamma)?,
                Tensor::from_vec(&[c], dbeta)?,
            ]);
            grad_out = next_grads;
        }
        block_grads.reverse();

        let mut tensors: Vec<Tensor> = block_grads.into_iter().flatten().collect();
        tensors.extend([d_lstm_x, d_lstm_h, d_lstm_b, d_att_w, d_att_v, d_dense_w, d_dense_b]);
        Ok((loss, ModelGrads { tensors }))
    }

    /// Forward + backward for a labeled training batch.
    pub fn loss_and_grads(&mut self, batch: &[&Tensor], labels: &[usize], mode: Mode) -> Result<(f64, ModelGrads)> {
        let pass = self.forward(batch, mode)?;
        self.backward(&pass, labels)
    }

    fn eval_blocks(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for block in &self.blocks {
            cur = block.eval(&cur, self.config.elu_alpha)?;
        }
        Ok(cur)
    }

    /// Eval-mode class probabilities for one input; never mutates state.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let out = self.eval_blocks(x)?;
        Ok(self.head_forward(&out)?.0)
    }

    /// Eval-mode prediction straight from a spectrogram.
    pub fn predict_spectrogram(&self, spec: &MelSpectrogram) -> Result<Vec<f64>> {
        self.predict(&input_tensor(spec))
    }

    /// Eval-mode output of the LFLB stack, `[H, T, C]`.
    pub fn lflb_output(&self, x: &Tensor) -> Result<Tensor> {
        self.eval_blocks(x)
    }

    /// Eval-mode intermediate representation.
    pub fn embed(&self, x: &Tensor, stage: EmbeddingStage) -> Result<Tensor> {
        let out = self.eval_blocks(x)?;
        let (hidden, _) = lstm_forward(&to_sequence(&out), &self.lstm)?;
        match stage {
            EmbeddingStage::PostLstm => Ok(hidden),
            EmbeddingStage::PostAttention => Ok(attention_pool(&hidden, &self.attention)?.0.context),
        }
    }
}

/// Index of the largest probability.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}
