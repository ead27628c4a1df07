//! Speech emotion recognition core.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (an allocator is required). File formats, audio
//! decoding and the command-line front end live in the `sertk` crate.
//!
//! The pipeline, in order:
//!
//! * [`dsp`] turns 16 kHz audio into fixed-size log-mel spectrograms.
//! * [`nn`] holds the hand-differentiated layers (convolution, batch
//!   normalization, ELU, max pooling, LSTM, attention pooling, softmax
//!   cross-entropy) and the Adam optimizer.
//! * [`model`] wires those layers into the attentive CNN+LSTM classifier.
//! * [`train`] runs stratified k-fold cross-validation and scores folds by
//!   unweighted accuracy.
//! * [`annotate`] resolves four-listener perceptual votes into labels.
//! * [`analyze`] computes per-speaker emotion shares and joins them with
//!   electoral records.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analyze;
pub mod annotate;
pub mod dsp;
mod error;
pub mod fingerprint;
mod label;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use label::EmotionLabel;
