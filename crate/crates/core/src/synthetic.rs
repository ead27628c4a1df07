//! Class-separable synthetic log-mel corpora.
//!
//! Each utterance is a noisy background spectrogram whose active part is
//! followed by floor-valued padding, like a short clip after
//! `pad_or_truncate`. Class `c` lifts the `c`-th quarter of the mel axis by
//! `band_gain + c * level_step` over the active part, so every class owns a
//! disjoint band and, when `level_step > 0`, a distinct band level. The
//! noise is Gaussian, so separability holds with overwhelming probability
//! rather than surely; keep `band_gain` several `noise` widths large.

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::{DspConfig, MelSpectrogram};
use crate::train::{Dataset, Example};
use crate::{EmotionLabel, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_mels: usize,
    pub frames: usize,
    pub per_class: usize,
    pub speakers: usize,
    /// Mean log-energy of the background.
    pub background: f64,
    /// Standard deviation of per-cell noise.
    pub noise: f64,
    /// Lift of the class band above the background.
    pub band_gain: f64,
    /// Extra lift per class index.
    pub level_step: f64,
    /// Shortest active part as a fraction of `frames`.
    pub min_active: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            frames: 1280,
            per_class: 100,
            speakers: 8,
            background: -8.0,
            noise: 1.0,
            band_gain: 6.0,
            level_step: 0.0,
            min_active: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels < EmotionLabel::COUNT || self.frames == 0 || self.per_class == 0 || self.speakers == 0 {
            return Err(Error::InvalidConfig(format!(
                "synthetic corpus needs n_mels >= 4 and positive frames, per_class and speakers, got {self:?}"
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise = {} must be finite and >= 0", self.noise)));
        }
        if !(self.min_active > 0.0 && self.min_active <= 1.0) {
            return Err(Error::InvalidConfig(format!("min_active = {} must lie in (0, 1]", self.min_active)));
        }
        Ok(())
    }
}

/// Generates `4 * per_class` labeled spectrograms, classes interleaved so
/// item `i` has class `i % 4`, speakers assigned round-robin.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let dsp = DspConfig { n_mels: cfg.n_mels, target_frames: cfg.frames, ..DspConfig::default() };
    let floor = dsp.floor_value();
    let fingerprint = dsp.fingerprint();
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let band = cfg.n_mels / EmotionLabel::COUNT;
    let n = cfg.per_class * EmotionLabel::COUNT;
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let label = EmotionLabel::ALL[i % EmotionLabel::COUNT];
        let c = label.index();
        let min_len = ((cfg.frames as f64 * cfg.min_active).ceil() as usize).clamp(1, cfg.frames);
        let active = rng.gen_range(min_len..=cfg.frames);
        let offset = rng.gen_range(-1.0..1.0);
        let lift = cfg.band_gain + c as f64 * cfg.level_step;
        let mut values = Vec::with_capacity(cfg.n_mels * cfg.frames);
        for row in 0..cfg.n_mels {
            let in_band = row / band == c;
            for col in 0..cfg.frames {
                let v = if col < active {
                    let base = cfg.background + offset + noise.sample(&mut rng);
                    if in_band { base + lift } else { base }
                } else {
                    floor
                };
                values.push(v.max(floor));
            }
        }
        examples.push(Example {
            id: format!("syn{i:04}"),
            speaker: format!("spk{}", i % cfg.speakers),
            spec: MelSpectrogram::from_values(cfg.n_mels, cfg.frames, values, floor, fingerprint)?,
            label,
        });
    }
    Dataset::new(examples)
}
