//! Frame-level prosodic and spectral speech features.
//!
//! Every extractor frames the clip identically: a 25 ms window every 1/120 s,
//! so `n_frames = floor((duration - 0.025) * 120) + 1`. Frame timestamps mark
//! window centers.

mod deltas;
mod mfcc;
mod pca;
mod pitch;

use serde::{Deserialize, Serialize};

pub use deltas::{temporal_derivatives, DELTA2_SUFFIX, DELTA_SUFFIX};
pub use mfcc::{mel_filterbank, mfcc};
pub use pca::{apply_pca, fit_pca, PcaModel};
pub use pitch::f0_contour;

use crate::error::{Error, Result};
use crate::ingest::AudioClip;
use crate::track::{FeatureTrack, FrameGrid};

/// Column order of the assembled 18-dimensional speech vector.
pub const SPEECH_COLUMNS: [&str; 18] = [
    "pc_1",
    "pc_2",
    "pc_3",
    "pc_4",
    "pc_5",
    "pc_6",
    "pc_7",
    "pc_8",
    "pc_9",
    "pc_10",
    "pc_11",
    "pc_12",
    "f0_hz",
    "energy_rms",
    "f0_hz_delta",
    "f0_hz_delta2",
    "energy_rms_delta",
    "energy_rms_delta2",
];

/// The six prosodic columns of [`SPEECH_COLUMNS`].
pub const PROSODY_COLUMNS: [&str; 6] = [
    "f0_hz",
    "energy_rms",
    "f0_hz_delta",
    "f0_hz_delta2",
    "energy_rms_delta",
    "energy_rms_delta2",
];

pub const N_PCA_COMPONENTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeechConfig {
    pub frame_rate_hz: f64,
    pub window_s: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Penalty per octave of lag, favouring the shortest plausible period.
    pub octave_cost: f64,
    /// Pitch analysis window length in periods of `f0_min_hz`.
    pub pitch_window_periods: f64,
    /// Frames quieter than this fraction of the clip peak are unvoiced.
    pub silence_threshold: f64,
    pub n_mel_filters: usize,
    pub mel_low_hz: f64,
    /// `None` means Nyquist.
    pub mel_high_hz: Option<f64>,
    pub n_mfcc: usize,
    pub log_floor: f64,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        Self {
            frame_rate_hz: 120.0,
            window_s: 0.025,
            f0_min_hz: 50.0,
            f0_max_hz: 500.0,
            voicing_threshold: 0.45,
            octave_cost: 0.03,
            pitch_window_periods: 3.0,
            silence_threshold: 0.03,
            n_mel_filters: 26,
            mel_low_hz: 0.0,
            mel_high_hz: None,
            n_mfcc: 12,
            log_floor: 1e-10,
        }
    }
}

/// Sample positions of the shared analysis frames.
#[derive(Debug, Clone)]
pub(crate) struct Framing {
    pub grid: FrameGrid,
    pub window: usize,
    pub starts: Vec<usize>,
}

impl Framing {
    pub fn new(clip: &AudioClip, config: &SpeechConfig) -> Result<Self> {
        let sr = clip.sample_rate_hz() as f64;
        let duration = clip.duration_s();
        let window = (config.window_s * sr).round() as usize;
        if duration < config.window_s || window == 0 || window > clip.n_samples() {
            return Err(Error::ClipShorterThanWindow {
                duration_s: duration,
                window_s: config.window_s,
            });
        }
        let n = ((duration - config.window_s) * config.frame_rate_hz + 1e-9).floor() as usize + 1;
        let last_start = clip.n_samples() - window;
        let starts = (0..n)
            .map(|i| ((i as f64 * sr / config.frame_rate_hz).round() as usize).min(last_start))
            .collect();
        let grid = FrameGrid::new(
            config.frame_rate_hz,
            clip.start_s() + window as f64 / (2.0 * sr),
            n,
        )?;
        Ok(Self {
            grid,
            window,
            starts,
        })
    }

    pub fn center(&self, i: usize) -> usize {
        self.starts[i] + self.window / 2
    }
}

/// Per-frame `sqrt(mean(x^2))` over the rectangular analysis window.
pub fn rms_energy(clip: &AudioClip, config: &SpeechConfig) -> Result<FeatureTrack> {
    let x = clip.mono_samples()?;
    let framing = Framing::new(clip, config)?;
    let values = framing
        .starts
        .iter()
        .map(|&s| {
            let w = &x[s..s + framing.window];
            (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt()
        })
        .collect();
    FeatureTrack::single(framing.grid, "energy_rms", values)
}

/// F0 and RMS energy with their first and second derivatives (6 columns).
pub fn prosody_track(clip: &AudioClip, config: &SpeechConfig) -> Result<FeatureTrack> {
    let f0 = f0_contour(clip, config)?;
    let energy = rms_energy(clip, config)?;
    let statics = FeatureTrack::concat(&[&f0, &energy])?;
    temporal_derivatives(&statics)
}

/// Twelve MFCCs with derivatives (36 columns).
pub fn spectral_track(clip: &AudioClip, config: &SpeechConfig) -> Result<FeatureTrack> {
    temporal_derivatives(&mfcc(clip, config)?)
}

/// Concatenate 12 principal components and 6 prosodic columns into the
/// 18-column speech vector.
pub fn assemble_speech_features(pca: &FeatureTrack, prosody: &FeatureTrack) -> Result<FeatureTrack> {
    if !pca.grid().matches(prosody.grid()) {
        return Err(Error::GridMismatch(format!(
            "principal components on {:?}, prosody on {:?}",
            pca.grid(),
            prosody.grid()
        )));
    }
    if pca.n_columns() != N_PCA_COMPONENTS {
        return Err(Error::DimensionMismatch {
            expected: N_PCA_COMPONENTS,
            found: pca.n_columns(),
        });
    }
    let prosody = prosody.select(&PROSODY_COLUMNS)?;
    let mut data: Vec<Vec<f64>> = pca.data().to_vec();
    data.extend(prosody.data().iter().cloned());
    FeatureTrack::new(
        *pca.grid(),
        SPEECH_COLUMNS.iter().map(|s| s.to_string()).collect(),
        data,
    )
}

/// Prosody, spectral track and the PCA model fitted on this clip alone.
pub struct SpeechAnalysis {
    pub prosody: FeatureTrack,
    pub spectral: FeatureTrack,
}

pub fn analyze_clip(clip: &AudioClip, config: &SpeechConfig) -> Result<SpeechAnalysis> {
    Ok(SpeechAnalysis {
        prosody: prosody_track(clip, config)?,
        spectral: spectral_track(clip, config)?,
    })
}

/// Full per-session path: features, a session-level PCA and assembly.
pub fn speech_features(clip: &AudioClip, config: &SpeechConfig) -> Result<(FeatureTrack, PcaModel)> {
    let analysis = analyze_clip(clip, config)?;
    let model = fit_pca(&analysis.spectral, N_PCA_COMPONENTS)?;
    let pcs = apply_pca(&model, &analysis.spectral)?;
    Ok((assemble_speech_features(&pcs, &analysis.prosody)?, model))
}
