//! Flat TOML run configuration.
//!
//! Every tunable has a key and a default; unknown keys are rejected. Paths
//! are resolved against the directory holding the config file (or the
//! working directory when no file is given). An empty path string selects
//! the documented fallback for that key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sertk_core::analyze::Weighting;
use sertk_core::annotate::AggregationPolicy;
use sertk_core::dsp::DspConfig;
use sertk_core::model::{EmbeddingStage, ModelConfig};
use sertk_core::nn::AdamConfig;
use sertk_core::synthetic::SyntheticConfig;
use sertk_core::train::TrainConfig;
use sertk_core::EmotionLabel;

use crate::error::{io_err, Error, Result};

/// The shipped defaults, kept in sync with [`RunConfig::default`] by test.
pub const DEFAULT_TOML: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // paths
    pub manifest: PathBuf,
    /// Base for relative audio paths in the manifest; empty means the
    /// manifest's own directory.
    pub audio_dir: PathBuf,
    pub votes: PathBuf,
    /// Labels written by `annotate` and read by `train`; empty means
    /// `<out_dir>/labels.csv`.
    pub labels: PathBuf,
    /// Empty selects the built-in fixture.
    pub electoral: PathBuf,
    pub out_dir: PathBuf,
    /// Empty means `<out_dir>/features`.
    pub cache_dir: PathBuf,
    /// Utterances to classify in `analyze`; empty reuses `manifest`.
    pub analyze_manifest: PathBuf,
    /// Empty means `<out_dir>/checkpoints/fold0.json`.
    pub checkpoint: PathBuf,

    pub seed: u64,

    // dsp
    pub sample_rate: u32,
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub n_mels: usize,
    pub target_frames: usize,
    pub log_floor: f64,

    // model
    pub kernels: Vec<usize>,
    pub kernel_size: usize,
    pub pools: Vec<usize>,
    pub lstm_units: usize,
    pub attention_units: usize,
    pub elu_alpha: f64,

    // train
    pub folds: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub speaker_disjoint: bool,

    // annotate
    pub plurality_is_majority: bool,

    // analyze
    pub weighting: String,
    /// `none`, `post_lstm` or `post_attention`.
    pub embedding_stage: String,

    // synthetic corpus for `train --synthetic`
    pub synthetic_per_class: usize,
    pub synthetic_speakers: usize,
    pub synthetic_background: f64,
    pub synthetic_noise: f64,
    pub synthetic_band_gain: f64,
    pub synthetic_level_step: f64,
    pub synthetic_min_active: f64,

    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dsp = DspConfig::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let adam = AdamConfig::default();
        let syn = SyntheticConfig::default();
        Self {
            manifest: "manifest.csv".into(),
            audio_dir: PathBuf::new(),
            votes: "votes.csv".into(),
            labels: PathBuf::new(),
            electoral: PathBuf::new(),
            out_dir: "out".into(),
            cache_dir: PathBuf::new(),
            analyze_manifest: PathBuf::new(),
            checkpoint: PathBuf::new(),
            seed: 0,
            sample_rate: dsp.sample_rate,
            frame_ms: dsp.frame_ms,
            hop_ms: dsp.hop_ms,
            n_fft: dsp.n_fft,
            n_mels: dsp.n_mels,
            target_frames: dsp.target_frames,
            log_floor: dsp.log_floor,
            kernels: model.kernels,
            kernel_size: model.kernel_size,
            pools: model.pools,
            lstm_units: model.lstm_units,
            attention_units: model.attention_units,
            elu_alpha: model.elu_alpha,
            folds: train.k,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            speaker_disjoint: train.speaker_disjoint,
            plurality_is_majority: AggregationPolicy::default().plurality_is_majority,
            weighting: Weighting::default().as_str().into(),
            embedding_stage: "none".into(),
            synthetic_per_class: syn.per_class,
            synthetic_speakers: syn.speakers,
            synthetic_background: syn.background,
            synthetic_noise: syn.noise,
            synthetic_band_gain: syn.band_gain,
            synthetic_level_step: syn.level_step,
            synthetic_min_active: syn.min_active,
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults rooted at the working
    /// directory when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::parse(&text, &base).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Replaces the output directory; `dir` is taken as given, not
    /// resolved against the config directory.
    pub fn set_out_dir(&mut self, dir: PathBuf) {
        self.out_dir = if dir.is_relative() {
            std::env::current_dir().map(|c| c.join(&dir)).unwrap_or(dir)
        } else {
            dir
        };
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp().validate()?;
        self.train_config().validate()?;
        self.synthetic_config().validate()?;
        self.weighting()?;
        self.embedding_stage()?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.manifest)
    }

    pub fn audio_base(&self) -> PathBuf {
        if self.audio_dir.as_os_str().is_empty() {
            self.manifest_path().parent().map(Path::to_path_buf).unwrap_or_default()
        } else {
            self.resolve(&self.audio_dir)
        }
    }

    pub fn votes_path(&self) -> PathBuf {
        self.resolve(&self.votes)
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.or_out(&self.labels, "labels.csv")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.or_out(&self.cache_dir, "features")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.or_out(&self.checkpoint, "checkpoints/fold0.json")
    }

    pub fn analyze_manifest_path(&self) -> PathBuf {
        if self.analyze_manifest.as_os_str().is_empty() {
            self.manifest_path()
        } else {
            self.resolve(&self.analyze_manifest)
        }
    }

    /// `None` selects the built-in electoral fixture.
    pub fn electoral_path(&self) -> Option<PathBuf> {
        (!self.electoral.as_os_str().is_empty()).then(|| self.resolve(&self.electoral))
    }

    fn or_out(&self, p: &Path, fallback: &str) -> PathBuf {
        if p.as_os_str().is_empty() {
            self.out_path().join(fallback)
        } else {
            self.resolve(p)
        }
    }

    pub fn dsp(&self) -> DspConfig {
        DspConfig {
            sample_rate: self.sample_rate,
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
            n_fft: self.n_fft,
            n_mels: self.n_mels,
            target_frames: self.target_frames,
            log_floor: self.log_floor,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            n_mels: self.n_mels,
            frames: self.target_frames,
            kernels: self.kernels.clone(),
            kernel_size: self.kernel_size,
            pools: self.pools.clone(),
            lstm_units: self.lstm_units,
            attention_units: self.attention_units,
            classes: EmotionLabel::COUNT,
            elu_alpha: self.elu_alpha,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k: self.folds,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            seed: self.seed,
            speaker_disjoint: self.speaker_disjoint,
            model: self.model(),
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_mels: self.n_mels,
            frames: self.target_frames,
            per_class: self.synthetic_per_class,
            speakers: self.synthetic_speakers,
            background: self.synthetic_background,
            noise: self.synthetic_noise,
            band_gain: self.synthetic_band_gain,
            level_step: self.synthetic_level_step,
            min_active: self.synthetic_min_active,
            seed: self.seed,
        }
    }

    pub fn policy(&self) -> AggregationPolicy {
        AggregationPolicy { plurality_is_majority: self.plurality_is_majority }
    }

    pub fn weighting(&self) -> Result<Weighting> {
        Ok(self.weighting.parse()?)
    }

    pub fn embedding_stage(&self) -> Result<Option<EmbeddingStage>> {
        match self.embedding_stage.trim() {
            "" | "none" => Ok(None),
            s => Ok(Some(s.parse()?)),
        }
    }
}
