//! Multirate alignment onto a common session grid and rasterization of
//! speech intervals into speaking/overlap labels.
//!
//! Halving a 120 Hz track yields 60 Hz, not the 60.24 Hz session rate, so the
//! speech block is decimated and then linearly resampled onto the session grid.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EmotionTrack, SpeechIntervals};
use crate::track::{is_dropout, FeatureTrack, FrameGrid, DROPOUT};

pub const SESSION_RATE_HZ: f64 = 60.24;
/// Native rate of MoCap and of the speech feature extractors.
pub const NATIVE_RATE_HZ: f64 = 120.0;

/// Fractions of a period closer than this to a source frame snap onto it.
const SNAP: f64 = 1e-9;

/// Target-speaker speech condition of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Overlap,
    NonOverlap,
    All,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Overlap => "overlap",
            Condition::NonOverlap => "non_overlap",
            Condition::All => "all",
        }
    }

    /// True for speaking frames that belong to this condition.
    pub fn admits(self, speaking: f64, overlap: f64) -> bool {
        speaking == 1.0
            && match self {
                Condition::Overlap => overlap == 1.0,
                Condition::NonOverlap => overlap == 0.0,
                Condition::All => true,
            }
    }
}

fn source_position(src: &FrameGrid, t: f64) -> f64 {
    let p = ((t - src.start_s) * src.rate_hz).clamp(0.0, (src.n_frames - 1) as f64);
    let r = p.round();
    if (p - r).abs() < SNAP {
        r
    } else {
        p
    }
}

/// Linear interpolation of every column onto `target`. Target frames outside
/// the source span clamp to the nearest source frame; a dropout in either
/// bracketing frame yields a dropout.
pub fn resample_linear(track: &FeatureTrack, target: &FrameGrid) -> Result<FeatureTrack> {
    let src = track.grid();
    if src.n_frames < 2 {
        return Err(Error::EmptyTrack);
    }
    let weights: Vec<(usize, f64)> = target
        .timestamps()
        .map(|t| {
            let p = source_position(src, t);
            let i = (p.floor() as usize).min(src.n_frames - 1);
            (i, p - i as f64)
        })
        .collect();
    let data = track
        .data()
        .iter()
        .map(|col| {
            weights
                .iter()
                .map(|&(i, frac)| {
                    if frac == 0.0 {
                        col[i]
                    } else {
                        let (a, b) = (col[i], col[i + 1]);
                        if is_dropout(a) || is_dropout(b) {
                            DROPOUT
                        } else {
                            a + frac * (b - a)
                        }
                    }
                })
                .collect()
        })
        .collect();
    FeatureTrack::new(*target, track.columns().to_vec(), data)
}

/// Nearest-source-frame resampling, for categorical columns.
pub fn resample_nearest(track: &FeatureTrack, target: &FrameGrid) -> Result<FeatureTrack> {
    let src = track.grid();
    if src.n_frames == 0 {
        return Err(Error::EmptyTrack);
    }
    let idx: Vec<usize> = target
        .timestamps()
        .map(|t| {
            if src.n_frames == 1 {
                0
            } else {
                source_position(src, t).round() as usize
            }
        })
        .collect();
    let data = track
        .data()
        .iter()
        .map(|col| idx.iter().map(|&i| col[i]).collect())
        .collect();
    FeatureTrack::new(*target, track.columns().to_vec(), data)
}

/// Keep even-indexed frames of a 120 Hz track. The result runs at 60 Hz.
pub fn decimate_alternate(track: &FeatureTrack) -> Result<FeatureTrack> {
    let g = track.grid();
    if (g.rate_hz - NATIVE_RATE_HZ).abs() > 1e-3 * NATIVE_RATE_HZ {
        return Err(Error::RateMismatch {
            expected: NATIVE_RATE_HZ,
            found: g.rate_hz,
        });
    }
    let n = g.n_frames.div_ceil(2);
    let grid = FrameGrid::new(g.rate_hz / 2.0, g.start_s, n)?;
    let data = track
        .data()
        .iter()
        .map(|c| c.iter().step_by(2).copied().collect())
        .collect();
    FeatureTrack::new(grid, track.columns().to_vec(), data)
}

/// Frames whose timestamps fall in `[start, end)` receive `true`.
fn mark_interval(mask: &mut [bool], grid: &FrameGrid, start: f64, end: f64) {
    if mask.is_empty() {
        return;
    }
    let approx = ((start - grid.start_s) * grid.rate_hz).floor() - 1.0;
    let mut i = if approx <= 0.0 { 0 } else { approx as usize };
    while i < mask.len() && grid.timestamp(i) < start {
        i += 1;
    }
    while i < mask.len() && grid.timestamp(i) < end {
        mask[i] = true;
        i += 1;
    }
}

/// Binary `speaking` and `overlap` columns for `target_speaker`.
///
/// `overlap` is set only on frames where the target speaks and some other
/// speaker speaks too.
pub fn rasterize_intervals(
    intervals: &SpeechIntervals,
    target_speaker: &str,
    grid: &FrameGrid,
) -> Result<FeatureTrack> {
    let n = grid.n_frames;
    let mut own = vec![false; n];
    let mut other = vec![false; n];
    let mut seen = false;
    for e in intervals.entries() {
        if e.speaker == target_speaker {
            seen = true;
            mark_interval(&mut own, grid, e.start_s, e.end_s);
        } else {
            mark_interval(&mut other, grid, e.start_s, e.end_s);
        }
    }
    if !seen {
        log::warn!("speaker {target_speaker} has no intervals; labels are all zero");
    }
    let speaking: Vec<f64> = own.iter().map(|&s| s as u8 as f64).collect();
    let overlap: Vec<f64> = own
        .iter()
        .zip(&other)
        .map(|(&s, &o)| (s && o) as u8 as f64)
        .collect();
    FeatureTrack::new(
        *grid,
        vec!["speaking".into(), "overlap".into()],
        vec![speaking, overlap],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleRule {
    /// Every other frame, then linear interpolation onto the session grid.
    DecimateThenLinear,
    Linear,
    Nearest,
    Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockProvenance {
    pub name: String,
    pub source_rate_hz: f64,
    pub source_start_s: f64,
    pub source_frames: usize,
    pub rules: Vec<(String, ResampleRule)>,
}

/// All modalities of one session on a single frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTable {
    grid: FrameGrid,
    blocks: IndexMap<String, FeatureTrack>,
    provenance: Vec<BlockProvenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    grid: FrameGrid,
    blocks: Vec<SidecarBlock>,
    provenance: Vec<BlockProvenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarBlock {
    name: String,
    columns: Vec<String>,
}

impl SessionTable {
    pub fn new(grid: FrameGrid) -> Self {
        Self {
            grid,
            blocks: IndexMap::new(),
            provenance: Vec::new(),
        }
    }

    pub fn insert_block(
        &mut self,
        name: &str,
        track: FeatureTrack,
        provenance: BlockProvenance,
    ) -> Result<()> {
        if !track.grid().matches(&self.grid) {
            return Err(Error::GridMismatch(format!(
                "block {name} is not on the session grid"
            )));
        }
        if name.contains('.') || self.blocks.contains_key(name) {
            return Err(Error::InvalidParameter(format!("bad block name {name}")));
        }
        self.blocks.insert(name.to_string(), track);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn block(&self, name: &str) -> Result<&FeatureTrack> {
        self.blocks
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(format!("block {name}")))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, &FeatureTrack)> {
        self.blocks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn provenance(&self) -> &[BlockProvenance] {
        &self.provenance
    }

    pub fn column(&self, block: &str, column: &str) -> Result<&[f64]> {
        self.block(block)?
            .column(column)
            .map_err(|_| Error::UnknownColumn(format!("{block}.{column}")))
    }

    /// Session-grid frames of the given condition.
    pub fn condition_mask(&self, condition: Condition) -> Result<Vec<bool>> {
        let s = self.column("labels", "speaking")?;
        let o = self.column("labels", "overlap")?;
        Ok(s.iter().zip(o).map(|(&s, &o)| condition.admits(s, o)).collect())
    }

    /// Everything flattened with `block.column` names.
    pub fn flattened(&self) -> FeatureTrack {
        let parts: Vec<FeatureTrack> = self
            .blocks
            .iter()
            .map(|(name, t)| t.prefixed(&format!("{name}.")))
            .collect();
        let refs: Vec<&FeatureTrack> = parts.iter().collect();
        if refs.is_empty() {
            return FeatureTrack::empty(self.grid);
        }
        FeatureTrack::concat(&refs).expect("blocks share the session grid")
    }

    pub fn sidecar_json(&self) -> String {
        let sidecar = Sidecar {
            grid: self.grid,
            blocks: self
                .blocks
                .iter()
                .map(|(name, t)| SidecarBlock {
                    name: name.clone(),
                    columns: t.columns().to_vec(),
                })
                .collect(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        self.flattened().write_csv(csv_path)?;
        let json_path = json_path.as_ref();
        std::fs::write(json_path, self.sidecar_json()).map_err(|e| Error::io(json_path, e))
    }

    pub fn read(csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<SessionTable> {
        let json_path = json_path.as_ref();
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: json_path.into(),
            source,
        })?;
        let flat = FeatureTrack::read_csv(csv_path.as_ref())?;
        if flat.n_frames() != sidecar.grid.n_frames {
            return Err(Error::GridMismatch(format!(
                "table has {} rows, sidecar declares {}",
                flat.n_frames(),
                sidecar.grid.n_frames
            )));
        }
        let mut table = SessionTable::new(sidecar.grid);
        for block in &sidecar.blocks {
            let mut data = Vec::with_capacity(block.columns.len());
            for c in &block.columns {
                data.push(flat.column(&format!("{}.{c}", block.name))?.to_vec());
            }
            table
                .blocks
                .insert(block.name.clone(), FeatureTrack::new(sidecar.grid, block.columns.clone(), data)?);
        }
        table.provenance = sidecar.provenance;
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub rate_hz: f64,
    /// Shortest common span accepted, in seconds.
    pub min_span_s: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            rate_hz: SESSION_RATE_HZ,
            min_span_s: 1.0,
        }
    }
}

fn span(grid: &FrameGrid) -> (f64, f64) {
    (grid.start_s, grid.last_s())
}

fn provenance(name: &str, src: &FrameGrid, rules: Vec<(String, ResampleRule)>) -> BlockProvenance {
    BlockProvenance {
        name: name.to_string(),
        source_rate_hz: src.rate_hz,
        source_start_s: src.start_s,
        source_frames: src.n_frames,
        rules,
    }
}

fn uniform_rules(track: &FeatureTrack, rule: ResampleRule) -> Vec<(String, ResampleRule)> {
    track.columns().iter().map(|c| (c.clone(), rule)).collect()
}

/// Resample speech features, emotion estimates and motion activeness onto a
/// common grid over the intersection of their spans and attach labels.
pub fn align_session(
    speech: &FeatureTrack,
    emotion: &EmotionTrack,
    activeness: &FeatureTrack,
    intervals: &SpeechIntervals,
    target_speaker: &str,
    options: &AlignOptions,
) -> Result<SessionTable> {
    let native_speech = (speech.grid().rate_hz - NATIVE_RATE_HZ).abs() <= 1e-3 * NATIVE_RATE_HZ;
    let speech_src = if native_speech {
        decimate_alternate(speech)?
    } else {
        speech.clone()
    };
    let spans = [
        ("speech", span(speech_src.grid())),
        ("emotion", span(emotion.grid())),
        ("activeness", span(activeness.grid())),
    ];
    let lo = spans.iter().map(|s| s.1 .0).fold(f64::NEG_INFINITY, f64::max);
    let hi = spans.iter().map(|s| s.1 .1).fold(f64::INFINITY, f64::min);
    if !(hi - lo >= options.min_span_s) {
        let desc: Vec<String> = spans
            .iter()
            .map(|(n, (a, b))| format!("{n} [{a}, {b}]"))
            .collect();
        return Err(Error::NoTemporalOverlap(format!(
            "common span shorter than {} s: {}",
            options.min_span_s,
            desc.join(", ")
        )));
    }
    let grid = FrameGrid::spanning(options.rate_hz, lo, hi)?;
    let mut table = SessionTable::new(grid);

    let speech_rule = if native_speech {
        ResampleRule::DecimateThenLinear
    } else {
        ResampleRule::Linear
    };
    table.insert_block(
        "speech",
        resample_linear(&speech_src, &grid)?,
        provenance("speech", speech.grid(), uniform_rules(speech, speech_rule)),
    )?;

    let emo = emotion.track();
    let continuous = emo.select(&["arousal", "valence", "confidence"])?;
    let cat = emo.select(&["category"])?;
    let lin = resample_linear(&continuous, &grid)?;
    let near = resample_nearest(&cat, &grid)?;
    let emotion_block = FeatureTrack::new(
        grid,
        vec![
            "arousal".into(),
            "valence".into(),
            "category".into(),
            "confidence".into(),
        ],
        vec![
            lin.column_at(0).to_vec(),
            lin.column_at(1).to_vec(),
            near.column_at(0).to_vec(),
            lin.column_at(2).to_vec(),
        ],
    )?;
    let mut emo_rules = uniform_rules(&continuous, ResampleRule::Linear);
    emo_rules.push(("category".into(), ResampleRule::Nearest));
    table.insert_block(
        "emotion",
        emotion_block,
        provenance("emotion", emotion.grid(), emo_rules),
    )?;

    table.insert_block(
        "activeness",
        resample_linear(activeness, &grid)?,
        provenance(
            "activeness",
            activeness.grid(),
            uniform_rules(activeness, ResampleRule::Linear),
        ),
    )?;

    let labels = rasterize_intervals(intervals, target_speaker, &grid)?;
    let label_rules = uniform_rules(&labels, ResampleRule::Raster);
    table.insert_block(
        "labels",
        labels,
        BlockProvenance {
            name: "labels".into(),
            source_rate_hz: 0.0,
            source_start_s: 0.0,
            source_frames: intervals.len(),
            rules: label_rules,
        },
    )?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SpeechInterval;

    fn ramp(rate: f64, start: f64, n: usize) -> FeatureTrack {
        let g = FrameGrid::new(rate, start, n).unwrap();
        let v = g.timestamps().collect();
        FeatureTrack::single(g, "t", v).unwrap()
    }

    #[test]
    fn constant_and_ramp_resample_exactly() {
        let g = FrameGrid::new(120.0, 0.0, 240).unwrap();
        let c = FeatureTrack::single(g, "c", vec![2.5; 240]).unwrap();
        let target = FrameGrid::spanning(60.24, 0.0, g.last_s()).unwrap();
        assert!(resample_linear(&c, &target)
            .unwrap()
            .column_at(0)
            .iter()
            .all(|&v| v == 2.5));
        let r = resample_linear(&ramp(120.0, 0.0, 240), &target).unwrap();
        for (t, v) in target.timestamps().zip(r.column_at(0)) {
            assert!((t - v).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_span_clamps_and_dropout_propagates() {
        let g = FrameGrid::new(10.0, 0.0, 4).unwrap();
        let t = FeatureTrack::single(g, "x", vec![1.0, DROPOUT, 3.0, 4.0]).unwrap();
        let target = FrameGrid::new(20.0, -0.1, 10).unwrap();
        let r = resample_linear(&t, &target).unwrap();
        let c = r.column_at(0);
        assert_eq!(c[0], 1.0); // t=-0.1 clamps
        assert_eq!(c[2], 1.0); // t=0.0 exact
        assert!(is_dropout(c[3]) && is_dropout(c[4]) && is_dropout(c[5]));
        assert_eq!(c[6], 3.0);
        assert!((c[7] - 3.5).abs() < 1e-12);
        assert_eq!(c[9], 4.0); // t=0.35 clamps to last
        let one = FeatureTrack::single(FrameGrid::new(10.0, 0.0, 1).unwrap(), "x", vec![1.0])
            .unwrap();
        assert!(matches!(resample_linear(&one, &target), Err(Error::EmptyTrack)));
    }

    #[test]
    fn decimation_keeps_even_frames() {
        let g = FrameGrid::new(120.0, 1.0, 10).unwrap();
        let t = FeatureTrack::single(g, "i", (0..10).map(|i| i as f64).collect()).unwrap();
        let d = decimate_alternate(&t).unwrap();
        assert_eq!(d.column_at(0), &[0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(d.grid().rate_hz, 60.0);
        for k in 0..5 {
            assert!((d.grid().timestamp(k) - g.timestamp(2 * k)).abs() < 1e-12);
        }
        let alt = FeatureTrack::single(g, "a", (0..10).map(|i| (i % 2) as f64).collect()).unwrap();
        assert!(decimate_alternate(&alt).unwrap().column_at(0).iter().all(|&v| v == 0.0));
        let wrong = FeatureTrack::single(FrameGrid::new(100.0, 0.0, 4).unwrap(), "a", vec![0.0; 4])
            .unwrap();
        assert!(matches!(
            decimate_alternate(&wrong),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn rasterize_example() {
        let iv = SpeechIntervals::new(vec![
            SpeechInterval {
                start_s: 0.0,
                end_s: 2.0,
                speaker: "F".into(),
            },
            SpeechInterval {
                start_s: 1.0,
                end_s: 3.0,
                speaker: "M".into(),
            },
        ])
        .unwrap();
        let g = FrameGrid::new(10.0, 0.0, 40).unwrap();
        let l = rasterize_intervals(&iv, "F", &g).unwrap();
        let s = l.column("speaking").unwrap();
        let o = l.column("overlap").unwrap();
        for i in 0..40 {
            assert_eq!(s[i], if i < 20 { 1.0 } else { 0.0 }, "frame {i}");
            assert_eq!(o[i], if (10..20).contains(&i) { 1.0 } else { 0.0 });
        }
        let none = rasterize_intervals(&SpeechIntervals::default(), "F", &g).unwrap();
        assert!(none.column_at(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn condition_admission() {
        assert!(Condition::All.admits(1.0, 1.0));
        assert!(!Condition::All.admits(0.0, 0.0));
        assert!(Condition::NonOverlap.admits(1.0, 0.0));
        assert!(!Condition::Overlap.admits(1.0, 0.0));
    }
}
