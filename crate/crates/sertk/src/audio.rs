//! WAV ingest: 8/16/24/32-bit integer or 32-bit float PCM, any channel
//! count, averaged to mono, resampled to the target rate and clamped to
//! [-1, 1].

use std::path::Path;

use rubato::{FftFixedIn, Resampler};
use sertk_core::dsp::Utterance;

use crate::error::{format_err, Result};

const RESAMPLE_CHUNK: usize = 1024;

/// Mono samples in [-1, 1] at the file's own sample rate.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path).map_err(|e| format_err(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(path, e))?,
        hound::SampleFormat::Int => {
            let scale = f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| format_err(path, e))?
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(format_err(path, "sample count is not a multiple of the channel count"));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

/// Band-limited resampling; output length is `round(n * to / from)`.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Result<Vec<f64>, String> {
    if from == to || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let mut r = FftFixedIn::<f64>::new(from as usize, to as usize, RESAMPLE_CHUNK, 2, 1).map_err(|e| e.to_string())?;
    let expected = (samples.len() as f64 * f64::from(to) / f64::from(from)).round() as usize;
    let delay = r.output_delay();
    let mut out = Vec::with_capacity(expected + delay + RESAMPLE_CHUNK);
    let mut pos = 0;
    while samples.len() - pos >= r.input_frames_next() {
        let n = r.input_frames_next();
        let chunk = r.process(&[&samples[pos..pos + n]], None).map_err(|e| e.to_string())?;
        out.extend_from_slice(&chunk[0]);
        pos += n;
    }
    if pos < samples.len() {
        let chunk = r.process_partial(Some(&[&samples[pos..]]), None).map_err(|e| e.to_string())?;
        out.extend_from_slice(&chunk[0]);
    }
    while out.len() < expected + delay {
        let chunk = r.process_partial::<&[f64]>(None, None).map_err(|e| e.to_string())?;
        out.extend_from_slice(&chunk[0]);
    }
    Ok(out[delay..delay + expected].to_vec())
}

/// Reads, downmixes, resamples to `sample_rate` and clamps.
pub fn load_utterance(id: &str, speaker: &str, path: &Path, sample_rate: u32) -> Result<Utterance> {
    let (mono, rate) = read_wav_mono(path)?;
    let mut samples = resample(&mono, rate, sample_rate).map_err(|e| format_err(path, e))?;
    for s in &mut samples {
        *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
    }
    Ok(Utterance::new(id, speaker, samples, sample_rate)?)
}

/// Writes 16-bit mono PCM; used for fixtures and tests.
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| format_err(path, e))?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16).map_err(|e| format_err(path, e))?;
    }
    w.finalize().map_err(|e| format_err(path, e))
}
