use alloc::string::String;

use crate::EmotionLabel;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("utterance too short: {samples} samples, one frame needs {frame_len}")]
    UtteranceTooShort { samples: usize, frame_len: usize },

    #[error("invalid utterance: {0}")]
    InvalidUtterance(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("train-mode batch normalization needs at least 2 examples, got {0}")]
    BatchTooSmall(usize),

    #[error("invalid vote set for utterance {utterance}: {reason}")]
    InvalidVotes { utterance: String, reason: String },

    #[error("confidence score {0} is outside 1..=5")]
    ConfidenceOutOfRange(f64),

    #[error("no accepted labels to summarize")]
    NoAcceptedLabels,

    #[error("unknown emotion label {0:?}")]
    UnknownLabel(String),

    #[error("class {class} has {count} members, fewer than the {k} folds requested")]
    ClassTooSmall {
        class: EmotionLabel,
        count: usize,
        k: usize,
    },

    #[error("confusion matrix row {0} is empty; recall is undefined")]
    EmptyClassRow(usize),

    #[error("fold {fold} is out of range for a {k}-fold plan")]
    FoldOutOfRange { fold: usize, k: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("no utterances for speaker {0}")]
    UnknownSpeaker(String),

    #[error("speaker {0} appears more than once")]
    DuplicateSpeaker(String),

    #[error("invalid electoral record for {speaker}: {reason}")]
    InvalidRecord { speaker: String, reason: String },

    #[error("unknown embedding stage {0:?} (expected post_lstm or post_attention)")]
    UnknownStage(String),
}
