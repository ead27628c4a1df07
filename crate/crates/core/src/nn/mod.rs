//! Trainable layers with hand-written backward passes.
//!
//! Feature maps are row-major `[height, width, channels]` tensors. For the
//! spectrogram input, height is the mel axis and width is time. Every
//! backward function here is checked against central finite differences in
//! the unit tests and in the `gradients` integration suite.

mod activation;
mod adam;
mod attention;
mod batchnorm;
pub(crate) mod conv;
mod dense;
pub(crate) mod gemm;
pub mod init;
mod lstm;
pub(crate) mod pool;
mod tensor;

pub use activation::{elu, elu_backward, elu_derivative, elu_scalar};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{
    attention_backward, attention_pool, AttentionCache, AttentionGrads, AttentionOutput,
    AttentionParams,
};
pub use batchnorm::{BatchNorm, BnBackward, ChannelStats, BN_EPS, BN_MOMENTUM};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads, ConvSpec, Padding};
pub use dense::{
    dense_softmax_xent, dense_softmax_xent_backward, log_softmax, softmax, DenseGrads, DenseParams,
};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams};
pub use pool::{maxpool, maxpool_backward, PoolOutput};
pub use tensor::Tensor;

/// Whether layers use batch statistics (and update running statistics) or
/// the frozen running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
