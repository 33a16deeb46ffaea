use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::pitch::hann;
use super::{Framing, SpeechConfig};
use crate::error::{Error, Result};
use crate::ingest::AudioClip;
use crate::track::FeatureTrack;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters over the `n_fft / 2 + 1` power-spectrum bins.
/// Row `m` holds the weights of filter `m`.
pub fn mel_filterbank(
    n_filters: usize,
    n_fft: usize,
    sample_rate_hz: f64,
    low_hz: f64,
    high_hz: f64,
) -> Result<Vec<Vec<f64>>> {
    if n_filters == 0 || n_fft < 2 || !(0.0..high_hz).contains(&low_hz) || high_hz > sample_rate_hz / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "mel filterbank: {n_filters} filters over [{low_hz}, {high_hz}] Hz at {sample_rate_hz} Hz"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate_hz / n_fft as f64;
    Ok((0..n_filters)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                })
                .collect()
        })
        .collect())
}

/// Orthonormal DCT-II of `x`, returning coefficients `0..n_out`.
fn dct_ii(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Static cepstral coefficients `mfcc_1..mfcc_{n_mfcc}`; coefficient 0 is
/// computed and discarded.
pub fn mfcc(clip: &AudioClip, config: &SpeechConfig) -> Result<FeatureTrack> {
    let x = clip.mono_samples()?;
    let framing = Framing::new(clip, config)?;
    let sr = clip.sample_rate_hz() as f64;
    if config.n_mfcc + 1 > config.n_mel_filters {
        return Err(Error::InvalidParameter(format!(
            "{} cepstral coefficients need more than {} mel filters",
            config.n_mfcc, config.n_mel_filters
        )));
    }
    let n_fft = framing.window.next_power_of_two();
    let bank = mel_filterbank(
        config.n_mel_filters,
        n_fft,
        sr,
        config.mel_low_hz,
        config.mel_high_hz.unwrap_or(sr / 2.0),
    )?;
    let taper = hann(framing.window);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::default(); n_fft];

    let mut columns = vec![Vec::with_capacity(framing.grid.n_frames); config.n_mfcc];
    for &start in &framing.starts {
        buf.iter_mut().for_each(|c| *c = Complex::default());
        for (k, w) in taper.iter().enumerate() {
            buf[k].re = x[start + k] * w;
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let log_energies: Vec<f64> = bank
            .iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(config.log_floor).ln()
            })
            .collect();
        let cep = dct_ii(&log_energies, config.n_mfcc + 1);
        for (col, v) in columns.iter_mut().zip(&cep[1..]) {
            col.push(*v);
        }
    }
    let names = (1..=config.n_mfcc).map(|i| format!("mfcc_{i}")).collect();
    FeatureTrack::new(framing.grid, names, columns)
}
