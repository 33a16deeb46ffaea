//! Autocorrelation pitch tracking.
//!
//! Each frame takes a Hann-tapered window of `pitch_window_periods / f0_min`
//! seconds around the shared frame center, divides its normalized
//! autocorrelation by the window's own autocorrelation, and picks the best
//! peak in the lag range implied by `[f0_min, f0_max]` after parabolic
//! refinement. Peaks below the voicing threshold report 0.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Framing, SpeechConfig};
use crate::error::Result;
use crate::ingest::AudioClip;
use crate::track::FeatureTrack;

pub(crate) fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

struct Autocorrelator {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Autocorrelator {
    fn new(len: usize) -> Self {
        let size = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            buf: vec![Complex::default(); size],
        }
    }

    /// Linear (non-circular) autocorrelation for lags `0..=max_lag`.
    fn run(&mut self, x: &[f64], max_lag: usize) -> Vec<f64> {
        for (i, slot) in self.buf.iter_mut().enumerate() {
            *slot = Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.forward.process(&mut self.buf);
        for c in self.buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.size as f64;
        self.buf[..=max_lag].iter().map(|c| c.re * scale).collect()
    }
}

/// Per-frame fundamental frequency in Hz, 0 for unvoiced frames.
pub fn f0_contour(clip: &AudioClip, config: &SpeechConfig) -> Result<FeatureTrack> {
    let x = clip.mono_samples()?;
    let framing = Framing::new(clip, config)?;
    let sr = clip.sample_rate_hz() as f64;

    let win_len = ((config.pitch_window_periods / config.f0_min_hz) * sr).round() as usize;
    let win_len = win_len.max(framing.window);
    let min_lag = ((sr / config.f0_max_hz).floor() as usize).max(2);
    let max_lag = ((sr / config.f0_min_hz).ceil() as usize).min(win_len / 2);
    let taper = hann(win_len);

    let mut ac = Autocorrelator::new(win_len);
    let window_ac = ac.run(&taper, max_lag + 1);
    let global_peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut frame = vec![0.0; win_len];
    let values = (0..framing.grid.n_frames)
        .map(|i| {
            // Window centered on the frame, shifted inside the clip when possible.
            let centre = framing.center(i) as isize;
            let mut start = centre - (win_len / 2) as isize;
            if x.len() >= win_len {
                start = start.clamp(0, (x.len() - win_len) as isize);
            }
            let mut peak = 0.0f64;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (k, slot) in frame.iter_mut().enumerate() {
                let idx = start + k as isize;
                let v = if idx >= 0 && (idx as usize) < x.len() {
                    count += 1;
                    x[idx as usize]
                } else {
                    0.0
                };
                peak = peak.max(v.abs());
                sum += v;
                *slot = v;
            }
            if peak == 0.0 || peak < config.silence_threshold * global_peak {
                return 0.0;
            }
            let mean = sum / count.max(1) as f64;
            for (k, slot) in frame.iter_mut().enumerate() {
                let idx = start + k as isize;
                let inside = idx >= 0 && (idx as usize) < x.len();
                *slot = if inside { (*slot - mean) * taper[k] } else { 0.0 };
            }
            let r = ac.run(&frame, max_lag + 1);
            if r[0] <= 0.0 {
                return 0.0;
            }
            let norm: Vec<f64> = (0..=max_lag + 1)
                .map(|lag| (r[lag] / r[0]) / (window_ac[lag] / window_ac[0]))
                .collect();
            best_period(&norm, min_lag, max_lag, config, sr)
        })
        .collect();
    FeatureTrack::single(framing.grid, "f0_hz", values)
}

fn best_period(norm: &[f64], min_lag: usize, max_lag: usize, config: &SpeechConfig, sr: f64) -> f64 {
    let mut best: Option<(f64, f64, f64)> = None; // (score, strength, lag)
    for lag in min_lag.max(1)..=max_lag {
        let (a, b, c) = (norm[lag - 1], norm[lag], norm[lag + 1]);
        if !(b > a && b >= c) {
            continue;
        }
        let curvature = a - 2.0 * b + c;
        let (shift, strength) = if curvature < 0.0 {
            let d = 0.5 * (a - c) / curvature;
            (d, b - 0.25 * (a - c) * d)
        } else {
            (0.0, b)
        };
        let period = lag as f64 + shift;
        let score = strength - config.octave_cost * (config.f0_min_hz * period / sr).log2();
        if best.is_none_or(|(s, _, _)| score > s) {
            best = Some((score, strength, period));
        }
    }
    match best {
        Some((_, strength, period)) if strength >= config.voicing_threshold => {
            let f0 = sr / period;
            if f0 >= config.f0_min_hz && f0 <= config.f0_max_hz {
                f0
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}
