//! Log-mel feature extraction.
//!
//! Audio is framed with a Hann window (25 ms frames, 10 ms hop at 16 kHz by
//! default), each frame is zero-padded to `n_fft` and turned into a power
//! spectrum, projected through a triangular mel filterbank and
//! log-compressed. [`pad_or_truncate`] then fixes the time length so every
//! utterance has the same input shape.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::fingerprint::Fnv64;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub n_mels: usize,
    pub target_frames: usize,
    /// Added to mel energies before the logarithm.
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_ms: 25,
            hop_ms: 10,
            n_fft: 512,
            n_mels: 64,
            target_frames: 1280,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    /// Frame length in samples.
    pub fn frame_len(&self) -> usize {
        self.frame_ms as usize * self.sample_rate as usize / 1000
    }

    /// Hop length in samples.
    pub fn hop_len(&self) -> usize {
        self.hop_ms as usize * self.sample_rate as usize / 1000
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// The log-domain value of a silent cell, used for padding.
    pub fn floor_value(&self) -> f64 {
        self.log_floor.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.frame_len() == 0 || self.hop_len() == 0 {
            return bad(format!(
                "frame ({} ms) and hop ({} ms) must each span at least one sample",
                self.frame_ms, self.hop_ms
            ));
        }
        if !self.n_fft.is_power_of_two() {
            return bad(format!("n_fft = {} is not a power of two", self.n_fft));
        }
        if self.frame_len() > self.n_fft {
            return bad(format!(
                "frame length {} exceeds n_fft = {}",
                self.frame_len(),
                self.n_fft
            ));
        }
        if self.n_mels < 2 {
            return bad(format!("n_mels = {} (need at least 2)", self.n_mels));
        }
        if self.target_frames == 0 {
            return bad("target_frames must be positive".into());
        }
        if !(self.log_floor.is_finite() && self.log_floor > 0.0) {
            return bad(format!("log_floor = {} must be positive", self.log_floor));
        }
        Ok(())
    }

    /// Stable hash of every field; recorded in feature caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write(b"sertk-dsp-v1");
        h.write_u64(u64::from(self.sample_rate))
            .write_u64(u64::from(self.frame_ms))
            .write_u64(u64::from(self.hop_ms))
            .write_u64(self.n_fft as u64)
            .write_u64(self.n_mels as u64)
            .write_u64(self.target_frames as u64)
            .write_u64(self.log_floor.to_bits());
        h.finish()
    }
}

/// One mono audio segment with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        speaker: impl Into<String>,
        samples: Vec<f64>,
        sample_rate: u32,
    ) -> Result<Self> {
        let id = id.into();
        if sample_rate == 0 {
            return Err(Error::InvalidUtterance(format!("{id}: sample rate is zero")));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidUtterance(format!(
                "{id}: sample {i} = {} is not a finite amplitude in [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self {
            id,
            speaker: speaker.into(),
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Number of frames of length `frame_len` at hop `hop` that fit in `n`
/// samples, or `None` when not even one fits.
pub fn frame_count(n: usize, frame_len: usize, hop: usize) -> Option<usize> {
    (n >= frame_len && hop > 0).then(|| (n - frame_len) / hop + 1)
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Splits `samples` into Hann-windowed frames of `cfg.frame_len()` samples
/// spaced `cfg.hop_len()` apart. Trailing samples that do not fill a whole
/// frame are dropped.
pub fn frame_signal(samples: &[f64], cfg: &DspConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let window = hann_window(cfg.frame_len());
    frames_with(samples, &window, cfg.hop_len())
}

fn frames_with(samples: &[f64], window: &[f64], hop: usize) -> Result<Vec<Vec<f64>>> {
    let len = window.len();
    let n = frame_count(samples.len(), len, hop).ok_or(Error::UtteranceTooShort {
        samples: samples.len(),
        frame_len: len,
    })?;
    Ok((0..n)
        .map(|f| {
            samples[f * hop..f * hop + len]
                .iter()
                .zip(window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

/// Precomputed radix-2 FFT of a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "FFT length {n} is not a power of two"
            )));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        // Twiddles are evaluated directly rather than by recurrence.
        let (cos, sin) = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Ok(Self { n, cos, sin, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, X_k = sum_j x_j exp(-2 pi i jk/n).
    pub fn transform(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert!(re.len() == n && im.len() == n, "FFT buffer length mismatch");
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let (wr, wi) = (self.cos[k * step], self.sin[k * step]);
                    let (a, b) = (start + k, start + k + half);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size *= 2;
        }
    }

    /// |DFT_k|^2 for k in 0..=n/2 of `frame` zero-padded to the FFT length.
    pub fn power_spectrum(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() > self.n {
            return Err(Error::Shape(format!(
                "frame of {} samples does not fit n_fft = {}",
                frame.len(),
                self.n
            )));
        }
        let mut re = vec![0.0; self.n];
        let mut im = vec![0.0; self.n];
        re[..frame.len()].copy_from_slice(frame);
        self.transform(&mut re, &mut im);
        Ok((0..=self.n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect())
    }
}

/// Power spectrum of one frame, zero-padded to `n_fft`; `n_fft/2 + 1` bins.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    Fft::new(n_fft)?.power_spectrum(frame)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale, `n_mels` rows over `n_fft/2 + 1`
/// spectrum bins, each peaking at 1.0 at its center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Weighted sum of `power` under every filter.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// Builds the filterbank with `n_mels + 2` edge points equally spaced in mel
/// between 0 Hz and the Nyquist frequency.
pub fn mel_filterbank(cfg: &DspConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let nyquist = f64::from(cfg.sample_rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;

    let mut weights = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (center - lo);
            let falling = (hi - f) / (hi - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; \
                 n_mels = {} is too large for n_fft = {}",
                cfg.n_mels, cfg.n_fft
            )));
        }
    }
    Ok(MelFilterbank {
        n_mels: cfg.n_mels,
        n_bins,
        weights,
        centers_hz: edges[1..=cfg.n_mels].to_vec(),
    })
}

/// Log-mel energies, `n_mels` rows by `n_frames` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    values: Vec<f64>,
    /// `ln(log_floor)`: the value of a silent cell and of padding.
    floor: f64,
    fingerprint: u64,
}

impl MelSpectrogram {
    pub fn from_values(
        n_mels: usize,
        n_frames: usize,
        values: Vec<f64>,
        floor: f64,
        fingerprint: u64,
    ) -> Result<Self> {
        if values.len() != n_mels * n_frames {
            return Err(Error::Shape(format!(
                "{} values for a {n_mels} x {n_frames} spectrogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || !floor.is_finite() {
            return Err(Error::Shape("spectrogram contains non-finite values".into()));
        }
        Ok(Self {
            n_mels,
            n_frames,
            values,
            floor,
            fingerprint,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn column(&self, frame: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_mels).map(move |m| self.get(m, frame))
    }
}

/// Reusable extractor holding the window, FFT plan and filterbank.
#[derive(Debug, Clone)]
pub struct MelExtractor {
    cfg: DspConfig,
    window: Vec<f64>,
    fft: Fft,
    bank: MelFilterbank,
}

impl MelExtractor {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        let bank = mel_filterbank(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            window: hann_window(cfg.frame_len()),
            fft: Fft::new(cfg.n_fft)?,
            bank,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Log-mel spectrogram of raw samples at the configured sample rate,
    /// before padding or truncation.
    pub fn extract(&self, samples: &[f64]) -> Result<MelSpectrogram> {
        let frames = frames_with(samples, &self.window, self.cfg.hop_len())?;
        let n_frames = frames.len();
        let n_mels = self.cfg.n_mels;
        let floor = self.cfg.log_floor;
        let mut values = vec![0.0; n_mels * n_frames];
        let mut energies = vec![0.0; n_mels];
        for (t, frame) in frames.iter().enumerate() {
            let power = self.fft.power_spectrum(frame)?;
            self.bank.apply(&power, &mut energies);
            for (m, e) in energies.iter().enumerate() {
                values[m * n_frames + t] = (e + floor).ln();
            }
        }
        MelSpectrogram::from_values(
            n_mels,
            n_frames,
            values,
            self.cfg.floor_value(),
            self.cfg.fingerprint(),
        )
    }

    pub fn extract_utterance(&self, u: &Utterance) -> Result<MelSpectrogram> {
        if u.sample_rate() != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.cfg.sample_rate,
                found: u.sample_rate(),
            });
        }
        self.extract(u.samples())
    }

    /// Extraction followed by [`pad_or_truncate`] to `target_frames`.
    pub fn extract_fixed(&self, u: &Utterance) -> Result<MelSpectrogram> {
        Ok(pad_or_truncate(&self.extract_utterance(u)?, self.cfg.target_frames))
    }
}

/// Log-mel spectrogram of an utterance already at `cfg.sample_rate`.
pub fn mel_spectrogram(u: &Utterance, cfg: &DspConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(cfg)?.extract_utterance(u)
}

/// Right-pads with silent columns or keeps the first `target_frames` columns.
pub fn pad_or_truncate(spec: &MelSpectrogram, target_frames: usize) -> MelSpectrogram {
    let keep = spec.n_frames.min(target_frames);
    let mut values = vec![spec.floor; spec.n_mels * target_frames];
    for m in 0..spec.n_mels {
        let src = &spec.values[m * spec.n_frames..m * spec.n_frames + keep];
        values[m * target_frames..m * target_frames + keep].copy_from_slice(src);
    }
    MelSpectrogram {
        n_mels: spec.n_mels,
        n_frames: target_frames,
        values,
        floor: spec.floor,
        fingerprint: spec.fingerprint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_lengths() {
        let cfg = DspConfig::default();
        assert_eq!(cfg.frame_len(), 400);
        assert_eq!(cfg.hop_len(), 160);
        assert_eq!(cfg.n_bins(), 257);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = DspConfig { n_fft: 256, ..DspConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg = DspConfig { n_fft: 500, ..DspConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = DspConfig { log_floor: 0.0, ..DspConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn frame_counts() {
        // floor((112000 - 400) / 160) + 1, checked by walking offsets.
        let mut offsets = 0;
        let mut start = 0;
        while start + 400 <= 112_000 {
            offsets += 1;
            start += 160;
        }
        assert_eq!(offsets, 698);
        assert_eq!(frame_count(112_000, 400, 160), Some(698));
        assert_eq!(frame_count(400, 400, 160), Some(1));
        assert_eq!(frame_count(399, 400, 160), None);
    }

    #[test]
    fn framing_errors_and_shapes() {
        let cfg = DspConfig::default();
        let frames = frame_signal(&vec![0.5; 400], &cfg).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 400);
        assert_eq!(
            frame_signal(&vec![0.5; 399], &cfg),
            Err(Error::UtteranceTooShort { samples: 399, frame_len: 400 })
        );
        let frames = frame_signal(&vec![1.0; 560], &cfg).unwrap();
        assert_eq!(frames.len(), 2);
        // Windowed copies of the same constant signal.
        assert_eq!(frames[0], frames[1]);
        assert_eq!(frames[0][0], 0.0);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut frame = vec![0.0; 8];
        frame[0] = 1.0;
        let p = power_spectrum(&frame, 8).unwrap();
        assert_eq!(p.len(), 5);
        for v in p {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(power_spectrum(&[0.0; 8], 8).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mel_scale_values() {
        let expect = 2595.0 * 2f64.log10();
        assert!((hz_to_mel(700.0) - expect).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(3210.0)) - 3210.0).abs() < 1e-9);
        assert_eq!(hz_to_mel(0.0), 0.0);
    }

    #[test]
    fn filterbank_rows_are_nondegenerate_and_ordered() {
        let cfg = DspConfig::default();
        let bank = mel_filterbank(&cfg).unwrap();
        assert_eq!(bank.n_mels(), 64);
        assert_eq!(bank.n_bins(), 257);
        let mut last_peak = 0;
        for m in 0..bank.n_mels() {
            let row = bank.row(m);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0), "row {m} empty");
            // Support is one contiguous run.
            let first = row.iter().position(|&w| w > 0.0).unwrap();
            let last = row.iter().rposition(|&w| w > 0.0).unwrap();
            assert!(row[first..=last].iter().all(|&w| w > 0.0), "row {m} has gaps");
            let peak = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert!(peak >= last_peak);
            last_peak = peak;
        }
        assert!(bank.centers_hz().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn too_many_mels_is_an_error() {
        let cfg = DspConfig { n_mels: 200, ..DspConfig::default() };
        assert!(matches!(mel_filterbank(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn silence_maps_to_floor() {
        let cfg = DspConfig::default();
        let u = Utterance::new("u", "s", vec![0.0; 16_000], 16_000).unwrap();
        let spec = mel_spectrogram(&u, &cfg).unwrap();
        assert_eq!(spec.n_mels(), 64);
        assert_eq!(spec.n_frames(), 98);
        let floor = 1e-10f64.ln();
        assert!(spec.values().iter().all(|&v| v == floor));
    }

    #[test]
    fn seven_seconds_gives_698_frames() {
        let cfg = DspConfig::default();
        let samples: Vec<f64> = (0..112_000).map(|i| 0.3 * (i as f64 * 0.01).sin()).collect();
        let u = Utterance::new("u", "s", samples, 16_000).unwrap();
        let spec = mel_spectrogram(&u, &cfg).unwrap();
        assert_eq!((spec.n_mels(), spec.n_frames()), (64, 698));
        let fixed = pad_or_truncate(&spec, 1280);
        assert_eq!(fixed.n_frames(), 1280);
        for m in 0..64 {
            for t in 0..698 {
                assert_eq!(fixed.get(m, t), spec.get(m, t));
            }
            for t in 698..1280 {
                assert_eq!(fixed.get(m, t), spec.floor());
            }
        }
    }

    #[test]
    fn truncation_keeps_prefix() {
        let values: Vec<f64> = (0..4 * 1500).map(|i| i as f64).collect();
        let spec = MelSpectrogram::from_values(4, 1500, values, -23.0, 1).unwrap();
        let cut = pad_or_truncate(&spec, 1280);
        for m in 0..4 {
            for t in 0..1280 {
                assert_eq!(cut.get(m, t).to_bits(), spec.get(m, t).to_bits());
            }
        }
        let same = pad_or_truncate(&cut, 1280);
        assert_eq!(same, cut);
    }

    #[test]
    fn utterance_validation() {
        assert!(Utterance::new("u", "s", vec![1.5], 16_000).is_err());
        assert!(Utterance::new("u", "s", vec![f64::NAN], 16_000).is_err());
        assert!(Utterance::new("u", "s", vec![0.0], 0).is_err());
        let u = Utterance::new("u", "s", vec![0.0; 8000], 16_000).unwrap();
        assert_eq!(u.duration(), 0.5);
        let cfg = DspConfig::default();
        let other = Utterance::new("u", "s", vec![0.0; 8000], 8000).unwrap();
        assert_eq!(
            mel_spectrogram(&other, &cfg),
            Err(Error::SampleRateMismatch { expected: 16_000, found: 8000 })
        );
    }
}
