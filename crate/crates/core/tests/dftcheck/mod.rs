//! Naive DFT oracle for the FFT power spectrum and a sine-placement check
//! for the mel filterbank.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sertk_core::dsp::{mel_filterbank, power_spectrum, DspConfig, MelExtractor};

/// |X_k|^2 by the O(n^2) definition, k in 0..=n/2.
pub fn naive_power(frame: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &x) in frame.iter().enumerate() {
                // Reduce jk mod n before scaling to keep the angle exact.
                let a = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Largest relative error of the FFT power spectrum against the naive DFT
/// over `instances` random frames with power-of-two sizes up to 512. Each
/// bin is compared relative to itself, floored at 1e-12 of the frame's
/// largest bin because a bin near zero carries rounding noise of that
/// magnitude.
pub fn check_power_spectrum(instances: usize, seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 1usize << r.gen_range(1..=9);
        let len = r.gen_range(1..=n);
        let frame: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fast = power_spectrum(&frame, n).unwrap();
        let slow = naive_power(&frame, n);
        let floor = 1e-12 * slow.iter().cloned().fold(0.0, f64::max).max(1e-300);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / b.abs().max(floor));
        }
    }
    worst
}

/// Filter rows whose center-frequency sine fails to put the column maximum
/// in that row, for every frame of a one-second tone.
pub fn sine_failures(cfg: &DspConfig, rows: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let fb = mel_filterbank(cfg).unwrap();
    let ex = MelExtractor::new(cfg).unwrap();
    let sr = f64::from(cfg.sample_rate);
    rows.into_iter()
        .filter(|&m| {
            let f = fb.centers_hz()[m];
            let samples: Vec<f64> = (0..cfg.sample_rate as usize)
                .map(|i| 0.5 * (2.0 * PI * f * i as f64 / sr).sin())
                .collect();
            let spec = ex.extract(&samples).unwrap();
            (0..spec.n_frames()).any(|t| {
                let col: Vec<f64> = spec.column(t).collect();
                let best = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
                best != m
            })
        })
        .collect()
}
