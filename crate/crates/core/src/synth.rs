//! Synthetic sessions with a known affine speech-to-motion coupling.
//!
//! Draw order from the single seeded generator: feature columns (in column
//! order), per-region noise (in region order), the turn schedule, the emotion
//! script, then marker base positions and step directions (region by region,
//! marker by marker). Changing any count upstream shifts every later draw.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_emotion_frames, write_intervals, write_markers, AudioClip, EmotionCategory,
    EmotionTrack, SpeechInterval, SpeechIntervals, DEFAULT_COORD_BOUND_MM,
};
use crate::motion::{MarkerTrack, RegionMap};
use crate::speech::SPEECH_COLUMNS;
use crate::timeline::NATIVE_RATE_HZ;
use crate::track::{FeatureTrack, FrameGrid};

pub const TARGET_SPEAKER: &str = "A";
pub const PARTNER_SPEAKER: &str = "B";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRegion {
    pub name: String,
    pub n_markers: usize,
    /// Ground-truth row of A₀, one weight per feature (mm per unit feature).
    pub a0: Vec<f64>,
    /// Mean displacement per frame in mm; must keep the target positive.
    pub b0: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnSchedule {
    pub mean_turn_s: f64,
    pub mean_partner_turn_s: f64,
    pub overlap_probability: f64,
    /// Length of an overlapping partner onset before the target's turn ends.
    pub overlap_s: f64,
}

impl Default for TurnSchedule {
    fn default() -> Self {
        Self {
            mean_turn_s: 6.0,
            mean_partner_turn_s: 1.5,
            overlap_probability: 0.3,
            overlap_s: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmotionScript {
    /// Category changes at multiples of this.
    pub segment_s: f64,
    pub arousal_amplitude: f64,
    pub valence_amplitude: f64,
    pub period_s: f64,
    pub confidence: f64,
}

impl Default for EmotionScript {
    fn default() -> Self {
        Self {
            segment_s: 8.0,
            arousal_amplitude: 0.7,
            valence_amplitude: 0.6,
            period_s: 15.0,
            confidence: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian kernel smoothing each feature.
    pub feature_smoothing_s: f64,
    /// Same for the additive noise; zero leaves it white.
    pub noise_smoothing_s: f64,
    pub regions: Vec<SynthRegion>,
    pub turns: TurnSchedule,
    pub emotion: EmotionScript,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 60.0,
            feature_dim: SPEECH_COLUMNS.len(),
            feature_smoothing_s: 0.05,
            noise_smoothing_s: 0.0125,
            regions: Vec::new(),
            turns: TurnSchedule::default(),
            emotion: EmotionScript::default(),
        }
    }
}

/// Markers per region in the helper-built specs.
pub const DEFAULT_MARKERS_PER_REGION: usize = 3;

impl SynthSpec {
    /// A spec whose regions have random A₀ rows (drawn from a generator
    /// seeded with `seed` but independent of the session draws) and noise
    /// levels giving the requested theoretical correlations.
    pub fn with_target_correlations(seed: u64, duration_s: f64, regions: &[(&str, f64)]) -> Result<Self> {
        let mut spec = SynthSpec {
            seed,
            duration_s,
            ..SynthSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a0a0_5eed_a0a0);
        for &(name, r) in regions {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InconsistentSpec(format!(
                    "target correlation {r} for {name} is outside (0, 1]"
                )));
            }
            let a0: Vec<f64> = (0..spec.feature_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.3 * z
                })
                .collect();
            let s = a0.iter().map(|a| a * a).sum::<f64>().sqrt();
            let noise_sigma = s * (1.0 / (r * r) - 1.0).max(0.0).sqrt();
            spec.regions.push(SynthRegion {
                name: name.to_string(),
                n_markers: DEFAULT_MARKERS_PER_REGION,
                b0: 8.0 * (s * s + noise_sigma * noise_sigma).sqrt() + 1.0,
                a0,
                noise_sigma,
            });
        }
        Ok(spec)
    }

    pub fn region(&self, name: &str) -> Option<&SynthRegion> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        if self.feature_dim == SPEECH_COLUMNS.len() {
            SPEECH_COLUMNS.iter().map(|s| s.to_string()).collect()
        } else {
            (1..=self.feature_dim).map(|i| format!("x_{i}")).collect()
        }
    }

    /// One marker list per region, named `<region>_<k>`.
    pub fn region_map(&self) -> Result<RegionMap> {
        let mut map = IndexMap::new();
        for r in &self.regions {
            map.insert(
                r.name.clone(),
                (1..=r.n_markers).map(|k| format!("{}_{k}", r.name)).collect(),
            );
        }
        RegionMap::new(map)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InconsistentSpec(msg));
        if !(self.duration_s > 0.0) || self.duration_s * NATIVE_RATE_HZ < 10.0 {
            return bad(format!("duration {} s is too short", self.duration_s));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim is 0".into());
        }
        if !(self.feature_smoothing_s >= 0.0 && self.noise_smoothing_s >= 0.0) {
            return bad("smoothing widths must be non-negative".into());
        }
        if self.regions.is_empty() {
            return bad("no regions".into());
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.regions {
            if !seen.insert(&r.name) {
                return bad(format!("region {} listed twice", r.name));
            }
            if r.a0.len() != self.feature_dim {
                return bad(format!(
                    "region {}: A0 row has {} weights for {} features",
                    r.name,
                    r.a0.len(),
                    self.feature_dim
                ));
            }
            if !(r.noise_sigma >= 0.0) || !r.b0.is_finite() || r.a0.iter().any(|a| !a.is_finite()) {
                return bad(format!("region {}: invalid coupling parameters", r.name));
            }
            if r.n_markers == 0 {
                return bad(format!("region {} has no markers", r.name));
            }
        }
        let t = &self.turns;
        if !(t.mean_turn_s > 0.0 && t.mean_partner_turn_s > 0.0 && (0.0..=1.0).contains(&t.overlap_probability) && t.overlap_s >= 0.0) {
            return bad("invalid turn schedule".into());
        }
        let e = &self.emotion;
        if !(e.segment_s > 0.0 && e.period_s > 0.0 && e.arousal_amplitude.abs() <= 1.0 && e.valence_amplitude.abs() <= 1.0) {
            return bad("invalid emotion script".into());
        }
        Ok(())
    }
}

/// Population correlation between a region's target and its best affine
/// prediction: `s / sqrt(s² + σ²)` with `s² = |a₀|²` (features are
/// independent with unit variance).
pub fn theoretical_r(spec: &SynthSpec, region: &str) -> Result<f64> {
    let r = spec
        .region(region)
        .ok_or_else(|| Error::InvalidParameter(format!("no synthetic region {region}")))?;
    let s2: f64 = r.a0.iter().map(|a| a * a).sum();
    if s2 == 0.0 {
        return Err(Error::ZeroSignalVariance(region.to_string()));
    }
    Ok((s2 / (s2 + r.noise_sigma * r.noise_sigma)).sqrt())
}

/// Everything one synthetic session produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    /// Features at 120 Hz, named like the assembled speech vector when 18-D.
    pub speech: FeatureTrack,
    /// Marker positions, starting one frame before the speech track.
    pub markers: MarkerTrack,
    pub intervals: SpeechIntervals,
    pub emotion: EmotionTrack,
    pub region_map: RegionMap,
    /// Per-region targets `A₀x + b₀ + ε` on the speech grid.
    pub targets: FeatureTrack,
}

/// Unit-energy Gaussian kernel over ±4σ frames; `[1]` for σ = 0.
fn smoothing_kernel(sigma_frames: f64) -> Vec<f64> {
    if sigma_frames <= 0.0 {
        return vec![1.0];
    }
    let half = (4.0 * sigma_frames).ceil() as isize;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma_frames * sigma_frames)).exp())
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.into_iter().map(|v| v / norm).collect()
}

/// `n` samples of white Gaussian noise filtered by `kernel` (unit variance
/// when the kernel has unit energy).
fn smoothed_noise(rng: &mut ChaCha8Rng, n: usize, kernel: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = (0..n + kernel.len() - 1)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    (0..n)
        .map(|i| kernel.iter().zip(&raw[i..]).map(|(w, v)| w * v).sum())
        .collect()
}

fn schedule(rng: &mut ChaCha8Rng, t: &TurnSchedule, duration: f64) -> Result<SpeechIntervals> {
    let turn = Exp::new(1.0 / t.mean_turn_s).expect("positive rate");
    let partner = Exp::new(1.0 / t.mean_partner_turn_s).expect("positive rate");
    let mut entries = Vec::new();
    let mut now = 0.0;
    while now < duration {
        let len = 0.5 + turn.sample(rng);
        let end = (now + len).min(duration);
        entries.push(SpeechInterval {
            start_s: now,
            end_s: end,
            speaker: TARGET_SPEAKER.into(),
        });
        let overlap = rng.random::<f64>() < t.overlap_probability;
        let p_start = if overlap {
            end - t.overlap_s.min(0.5 * (end - now))
        } else {
            end
        };
        let p_end = (p_start.max(end) + 0.2 + partner.sample(rng)).min(duration);
        if p_end > p_start {
            entries.push(SpeechInterval {
                start_s: p_start,
                end_s: p_end,
                speaker: PARTNER_SPEAKER.into(),
            });
        }
        now = p_end;
    }
    SpeechIntervals::new(entries)
}

fn emotion(rng: &mut ChaCha8Rng, script: &EmotionScript, grid: FrameGrid) -> Result<EmotionTrack> {
    let n_segments = ((grid.last_s() / script.segment_s).floor() as usize) + 1;
    // Shuffled cycles through the categories so every one gets segments.
    let mut cats: Vec<EmotionCategory> = Vec::with_capacity(n_segments + 4);
    while cats.len() < n_segments {
        let mut cycle = EmotionCategory::ALL;
        cycle.shuffle(rng);
        cats.extend(cycle);
    }
    let phase_a = rng.random::<f64>() * std::f64::consts::TAU;
    let phase_v = rng.random::<f64>() * std::f64::consts::TAU;
    let omega = std::f64::consts::TAU / script.period_s;
    let times: Vec<f64> = grid.timestamps().collect();
    EmotionTrack::new(
        grid,
        times.iter().map(|t| script.arousal_amplitude * (omega * t + phase_a).sin()).collect(),
        times
            .iter()
            .map(|t| script.valence_amplitude * (0.61 * omega * t + phase_v).sin())
            .collect(),
        times
            .iter()
            .map(|t| cats[((t / script.segment_s).floor() as usize).min(n_segments - 1)])
            .collect(),
        vec![script.confidence; grid.n_frames],
    )
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Generate one session. Deterministic in `spec` (including its seed).
pub fn generate_coupled_session(spec: &SynthSpec) -> Result<SynthSession> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rate = NATIVE_RATE_HZ;
    let n = (spec.duration_s * rate).floor() as usize;
    // Window-centre convention of the speech front end.
    let grid = FrameGrid::new(rate, 0.0125, n)?;

    let fk = smoothing_kernel(spec.feature_smoothing_s * rate);
    let x: Vec<Vec<f64>> = (0..spec.feature_dim)
        .map(|_| smoothed_noise(&mut rng, n, &fk))
        .collect();
    let speech = FeatureTrack::new(grid, spec.feature_names(), x)?;

    let nk = smoothing_kernel(spec.noise_smoothing_s * rate);
    let mut targets = FeatureTrack::empty(grid);
    for r in &spec.regions {
        let noise = smoothed_noise(&mut rng, n, &nk);
        let y: Vec<f64> = (0..n)
            .map(|f| {
                let ax: f64 = r.a0.iter().zip(speech.data()).map(|(a, c)| a * c[f]).sum();
                ax + r.b0 + r.noise_sigma * noise[f]
            })
            .collect();
        if let Some(min) = y.iter().copied().reduce(f64::min).filter(|m| *m < 0.0) {
            return Err(Error::InconsistentSpec(format!(
                "region {}: target reaches {min} mm, raise b0",
                r.name
            )));
        }
        targets.push_column(r.name.clone(), y)?;
    }

    let intervals = schedule(&mut rng, &spec.turns, spec.duration_s)?;
    let emotion = emotion(&mut rng, &spec.emotion, grid)?;

    // Marker frame j + 1 moves by the target of speech frame j.
    let marker_grid = FrameGrid::new(rate, grid.start_s - 1.0 / rate, n + 1)?;
    let region_map = spec.region_map()?;
    let names = region_map.all_markers();
    let n_markers = names.len();
    let mut positions = vec![[0.0; 3]; (n + 1) * n_markers];
    let mut m = 0;
    for (r, y) in spec.regions.iter().zip(targets.data()) {
        for _ in 0..r.n_markers {
            let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(-300.0..300.0));
            let mut p = base;
            positions[m] = p;
            for f in 0..n {
                let mut d = unit_direction(&mut rng);
                let outward: f64 = (0..3).map(|k| d[k] * (p[k] - base[k])).sum();
                if outward > 0.0 {
                    d = [-d[0], -d[1], -d[2]];
                }
                for k in 0..3 {
                    p[k] += y[f] * d[k];
                }
                positions[(f + 1) * n_markers + m] = p;
            }
            m += 1;
        }
    }
    let markers = MarkerTrack::new(marker_grid, names, positions)?;
    if markers.max_abs_coordinate() >= DEFAULT_COORD_BOUND_MM {
        return Err(Error::InconsistentSpec(
            "marker positions leave the plausible capture volume".into(),
        ));
    }
    Ok(SynthSession {
        speech,
        markers,
        intervals,
        emotion,
        region_map,
        targets,
    })
}

/// Paths written by [`write_session`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub speech_features: PathBuf,
    pub markers: PathBuf,
    pub transcript: PathBuf,
    pub emotion: PathBuf,
    pub region_map: PathBuf,
    pub spec: PathBuf,
    pub truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub region: String,
    pub a0: Vec<f64>,
    pub b0: f64,
    pub noise_sigma: f64,
    pub theoretical_r: Option<f64>,
}

pub fn truth(spec: &SynthSpec) -> Vec<RegionTruth> {
    spec.regions
        .iter()
        .map(|r| RegionTruth {
            region: r.name.clone(),
            a0: r.a0.clone(),
            b0: r.b0,
            noise_sigma: r.noise_sigma,
            theoretical_r: theoretical_r(spec, &r.name).ok(),
        })
        .collect()
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write a session in the formats the loaders read.
pub fn write_session(spec: &SynthSpec, session: &SynthSession, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        speech_features: dir.join("speech_features.csv"),
        markers: dir.join("markers.csv"),
        transcript: dir.join("transcript.txt"),
        emotion: dir.join("emotion.csv"),
        region_map: dir.join("region_map.json"),
        spec: dir.join("synth_spec.json"),
        truth: dir.join("truth.json"),
    };
    session.speech.write_csv(&files.speech_features)?;
    write_markers(&session.markers, &files.markers)?;
    write_intervals(&session.intervals, &files.transcript)?;
    write_emotion_frames(&session.emotion, &files.emotion)?;
    write_text(&files.region_map, session.region_map.to_json() + "\n")?;
    write_text(
        &files.spec,
        serde_json::to_string_pretty(spec).expect("spec serializes") + "\n",
    )?;
    write_text(
        &files.truth,
        serde_json::to_string_pretty(&truth(spec)).expect("truth serializes") + "\n",
    )?;
    Ok(files)
}

/// Harmonic tone complex with fundamental `f0_hz` and `1/k` amplitudes,
/// peak-normalized to 0.8. Useful for driving the pitch tracker.
pub fn tone_complex(f0_hz: f64, duration_s: f64, sample_rate_hz: u32, n_harmonics: usize) -> Result<AudioClip> {
    let sr = sample_rate_hz as f64;
    let n = (duration_s * sr).round() as usize;
    let harmonics: Vec<usize> = (1..=n_harmonics.max(1)).filter(|&k| k as f64 * f0_hz < sr / 2.0).collect();
    let mut s: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            harmonics
                .iter()
                .map(|&k| (std::f64::consts::TAU * k as f64 * f0_hz * t).sin() / k as f64)
                .sum()
        })
        .collect();
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
    AudioClip::mono(s, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{displacement_magnitudes, region_activeness};

    fn small(seed: u64) -> SynthSpec {
        let mut s = SynthSpec::with_target_correlations(seed, 10.0, &[("mouth", 1.0), ("hands", 0.5)]).unwrap();
        s.seed = seed;
        s
    }

    #[test]
    fn kernel_has_unit_energy() {
        for sigma in [0.0, 1.0, 6.0] {
            let k = smoothing_kernel(sigma);
            assert!((k.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn displacements_invert_construction() {
        let spec = small(4);
        let s = generate_coupled_session(&spec).unwrap();
        let act = region_activeness(&displacement_magnitudes(&s.markers).unwrap(), &s.region_map).unwrap();
        for (c, region) in ["mouth", "hands"].iter().enumerate() {
            let y = s.targets.column(region).unwrap();
            let got = act.column_at(c);
            assert_eq!(got[0], 0.0);
            for f in 0..y.len() {
                assert!((got[f + 1] - y[f]).abs() < 1e-9, "{region} frame {f}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_coupled_session(&small(11)).unwrap();
        let b = generate_coupled_session(&small(11)).unwrap();
        assert_eq!(a, b);
        let c = generate_coupled_session(&small(12)).unwrap();
        assert_ne!(a.speech, c.speech);
    }

    #[test]
    fn theoretical_r_examples() {
        let mut spec = small(1);
        assert_eq!(theoretical_r(&spec, "mouth").unwrap(), 1.0);
        let s = spec.regions[0].a0.iter().map(|a| a * a).sum::<f64>().sqrt();
        spec.regions[0].noise_sigma = s;
        assert!((theoretical_r(&spec, "mouth").unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((theoretical_r(&spec, "hands").unwrap() - 0.5).abs() < 1e-12);
        spec.regions[0].a0.iter_mut().for_each(|a| *a = 0.0);
        assert!(matches!(theoretical_r(&spec, "mouth"), Err(Error::ZeroSignalVariance(_))));
    }

    #[test]
    fn no_overlap_when_probability_zero() {
        let mut spec = small(3);
        spec.turns.overlap_probability = 0.0;
        let s = generate_coupled_session(&spec).unwrap();
        let e = s.intervals.entries();
        for a in e.iter().filter(|i| i.speaker == TARGET_SPEAKER) {
            for b in e.iter().filter(|i| i.speaker == PARTNER_SPEAKER) {
                assert!(a.end_s <= b.start_s || b.end_s <= a.start_s);
            }
        }
    }

    #[test]
    fn inconsistent_specs() {
        let mut spec = small(2);
        spec.regions[0].a0.pop();
        assert!(matches!(generate_coupled_session(&spec), Err(Error::InconsistentSpec(_))));
        let mut spec = small(2);
        spec.regions[1].b0 = 0.0;
        assert!(matches!(generate_coupled_session(&spec), Err(Error::InconsistentSpec(_))));
        let mut spec = small(2);
        spec.regions[1].noise_sigma = -1.0;
        assert!(matches!(generate_coupled_session(&spec), Err(Error::InconsistentSpec(_))));
    }

    #[test]
    fn features_have_unit_variance() {
        let mut spec = small(9);
        spec.duration_s = 120.0;
        let s = generate_coupled_session(&spec).unwrap();
        for col in s.speech.data() {
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            assert!((v - 1.0).abs() < 0.25, "{v}");
        }
    }
}
