//! Marker kinematics: framewise displacement magnitudes and region-level
//! expressive activeness.
//!
//! Input markers are assumed head-stabilized already; no rigid-motion
//! compensation happens here. Head markers form their own region.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EmotionCategory;
use crate::stats;
use crate::timeline::{Condition, SessionTable};
use crate::track::{is_dropout, FeatureTrack, FrameGrid, DROPOUT};

/// Per-marker 3D trajectories in millimeters, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrack {
    grid: FrameGrid,
    markers: Vec<String>,
    positions: Vec<[f64; 3]>,
}

impl MarkerTrack {
    /// `positions[f * n_markers + m]`; a dropout has all three coordinates `NaN`.
    pub fn new(grid: FrameGrid, markers: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() != grid.n_frames * markers.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_frames * markers.len(),
                found: positions.len(),
            });
        }
        for (i, m) in markers.iter().enumerate() {
            if markers[..i].contains(m) {
                return Err(Error::InconsistentMarkerSet(format!("duplicate marker {m}")));
            }
        }
        let positions = positions
            .into_iter()
            .map(|p| {
                if p.iter().any(|v| !v.is_finite()) {
                    [DROPOUT; 3]
                } else {
                    p
                }
            })
            .collect();
        Ok(Self {
            grid,
            markers,
            positions,
        })
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn n_frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    pub fn markers(&self) -> &[String] {
        &self.markers
    }

    pub fn position(&self, frame: usize, marker: usize) -> [f64; 3] {
        self.positions[frame * self.markers.len() + marker]
    }

    pub fn is_dropout(&self, frame: usize, marker: usize) -> bool {
        is_dropout(self.position(frame, marker)[0])
    }

    /// Largest finite absolute coordinate.
    pub fn max_abs_coordinate(&self) -> f64 {
        self.positions
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Apply `f` to every non-dropout position.
    pub fn map_positions(&self, mut f: impl FnMut(usize, [f64; 3]) -> [f64; 3]) -> MarkerTrack {
        let n_m = self.markers.len().max(1);
        let positions = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, &p)| if is_dropout(p[0]) { p } else { f(i / n_m, p) })
            .collect();
        MarkerTrack {
            grid: self.grid,
            markers: self.markers.clone(),
            positions,
        }
    }
}

/// Region order used in reports and heatmaps.
pub const REGIONS: [&str; 8] = [
    "head",
    "eyebrows",
    "mouth",
    "upper_face",
    "middle_face",
    "lower_face",
    "total_face",
    "hands",
];

/// Region name to marker identifiers, in a stable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionMap {
    regions: IndexMap<String, Vec<String>>,
}

fn numbered(prefix: &str, range: std::ops::RangeInclusive<u32>) -> Vec<String> {
    range.map(|i| format!("{prefix}{i}")).collect()
}

impl RegionMap {
    pub fn new(regions: IndexMap<String, Vec<String>>) -> Result<Self> {
        for (name, markers) in &regions {
            if markers.is_empty() {
                return Err(Error::InvalidParameter(format!("region {name} has no markers")));
            }
        }
        Ok(Self { regions })
    }

    /// The facial and hand layout of the rotated IEMOCAP marker files.
    pub fn iemocap() -> Self {
        let upper: Vec<String> = [
            numbered("FH", 1..=3),
            numbered("LBM", 0..=3),
            numbered("RBM", 0..=3),
            numbered("LBRO", 1..=4),
            numbered("RBRO", 1..=4),
            vec!["LLID".into(), "RRID".into()],
        ]
        .concat();
        let middle: Vec<String> = [
            numbered("LC", 2..=8),
            numbered("RC", 2..=8),
            ["MNOSE", "TNOSE", "LNSTRL", "RNSTRL"]
                .map(String::from)
                .to_vec(),
        ]
        .concat();
        let lower: Vec<String> = [
            numbered("MOU", 1..=8),
            numbered("CH", 1..=3),
            vec!["LC1".into(), "RC1".into()],
        ]
        .concat();
        let eyebrows: Vec<String> = [
            numbered("LBM", 0..=3),
            numbered("RBM", 0..=3),
            numbered("LBRO", 1..=4),
            numbered("RBRO", 1..=4),
        ]
        .concat();
        let total: Vec<String> = [upper.clone(), middle.clone(), lower.clone()].concat();
        let mut regions = IndexMap::new();
        regions.insert("head".into(), vec!["LHD".into(), "RHD".into()]);
        regions.insert("eyebrows".into(), eyebrows);
        regions.insert("mouth".into(), numbered("MOU", 1..=8));
        regions.insert("upper_face".into(), upper);
        regions.insert("middle_face".into(), middle);
        regions.insert("lower_face".into(), lower);
        regions.insert("total_face".into(), total);
        regions.insert(
            "hands".into(),
            [numbered("RH", 1..=3), numbered("LH", 1..=3)].concat(),
        );
        Self { regions }
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.regions.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn names(&self) -> Vec<String> {
        self.regions.keys().cloned().collect()
    }

    pub fn markers(&self, region: &str) -> Option<&[String]> {
        self.regions.get(region).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// All distinct markers referenced by any region, in first-use order.
    pub fn all_markers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in self.regions.values().flatten() {
            if !out.contains(m) {
                out.push(m.clone());
            }
        }
        out
    }

    /// Check the anatomical nesting of the eight standard regions:
    /// total face is the union of the three face bands, eyebrows sit in the
    /// upper face and the mouth in the lower face.
    pub fn validate_anatomy(&self) -> Result<()> {
        for r in REGIONS {
            if !self.regions.contains_key(r) {
                return Err(Error::InvalidParameter(format!("region map lacks {r}")));
            }
        }
        let set = |r: &str| -> std::collections::BTreeSet<&String> {
            self.regions[r].iter().collect()
        };
        let bands: std::collections::BTreeSet<&String> = set("upper_face")
            .union(&set("middle_face"))
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .union(&set("lower_face"))
            .copied()
            .collect();
        if set("total_face") != bands {
            return Err(Error::InvalidParameter(
                "total_face must equal the union of upper, middle and lower face".into(),
            ));
        }
        if !set("eyebrows").is_subset(&set("upper_face")) {
            return Err(Error::InvalidParameter("eyebrows must lie in upper_face".into()));
        }
        if !set("mouth").is_subset(&set("lower_face")) {
            return Err(Error::InvalidParameter("mouth must lie in lower_face".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let regions: IndexMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.into(),
                source,
            })?;
        Self::new(regions)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("region map serializes")
    }
}

/// Euclidean norm of each marker's frame-to-frame displacement. Frame 0 is 0;
/// a dropout at either endpoint yields a dropout.
pub fn displacement_magnitudes(markers: &MarkerTrack) -> Result<FeatureTrack> {
    let n = markers.n_frames();
    if n < 2 {
        return Err(Error::TooFewFrames {
            frames: n,
            required: 2,
        });
    }
    let mut data = Vec::with_capacity(markers.n_markers());
    for m in 0..markers.n_markers() {
        let mut col = Vec::with_capacity(n);
        col.push(if markers.is_dropout(0, m) { DROPOUT } else { 0.0 });
        for f in 1..n {
            let a = markers.position(f - 1, m);
            let b = markers.position(f, m);
            let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
            // NaN endpoints propagate through the arithmetic.
            col.push(d);
        }
        data.push(col);
    }
    FeatureTrack::new(*markers.grid(), markers.markers().to_vec(), data)
}

/// Per-frame mean displacement over each region's non-dropout markers.
pub fn region_activeness(displacements: &FeatureTrack, map: &RegionMap) -> Result<FeatureTrack> {
    let n = displacements.n_frames();
    let mut out = FeatureTrack::empty(*displacements.grid());
    for (region, markers) in map.regions() {
        let cols: Vec<&[f64]> = markers
            .iter()
            .map(|m| {
                displacements
                    .column(m)
                    .map_err(|_| Error::UnknownMarkerInMap {
                        region: region.to_string(),
                        marker: m.clone(),
                    })
            })
            .collect::<Result<_>>()?;
        let values = (0..n)
            .map(|f| {
                let (sum, count) = cols
                    .iter()
                    .map(|c| c[f])
                    .filter(|v| !is_dropout(*v))
                    .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
                if count == 0 {
                    DROPOUT
                } else {
                    sum / count as f64
                }
            })
            .collect();
        out.push_column(region, values)?;
    }
    Ok(out)
}

/// One (region, emotion, condition) cell of a session's activeness summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub region: String,
    pub emotion: EmotionCategory,
    pub condition: Condition,
    pub mean: Option<f64>,
    pub sem: Option<f64>,
    pub n_frames: usize,
    pub low_support: bool,
}

pub const DEFAULT_MIN_SUPPORT_FRAMES: usize = 30;

/// Mean and SEM of region activeness per emotion category and speech
/// condition, over frames where the target speaker is speaking.
///
/// `activeness` must be on the table's grid. Empty cells carry `None`.
pub fn condition_summaries(
    activeness: &FeatureTrack,
    table: &SessionTable,
    min_frames: usize,
) -> Result<Vec<SummaryCell>> {
    if !activeness.grid().matches(table.grid()) {
        return Err(Error::GridMismatch(
            "activeness is not on the session grid".into(),
        ));
    }
    let speaking = table.column("labels", "speaking")?;
    let overlap = table.column("labels", "overlap")?;
    let category = table.column("emotion", "category")?;
    let mut cells = Vec::new();
    for (r, region) in activeness.columns().iter().enumerate() {
        let values = activeness.column_at(r);
        for emotion in EmotionCategory::ALL {
            for condition in [Condition::NonOverlap, Condition::Overlap] {
                let picked: Vec<f64> = (0..values.len())
                    .filter(|&i| {
                        condition.admits(speaking[i], overlap[i])
                            && category[i] == emotion.code()
                            && !is_dropout(values[i])
                    })
                    .map(|i| values[i])
                    .collect();
                let n = picked.len();
                let mean = (n > 0).then(|| picked.iter().sum::<f64>() / n as f64);
                let sem = stats::sem(&picked).ok();
                cells.push(SummaryCell {
                    region: region.clone(),
                    emotion,
                    condition,
                    mean,
                    sem,
                    n_frames: n,
                    low_support: n < min_frames,
                });
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(positions: Vec<[f64; 3]>, n_markers: usize) -> MarkerTrack {
        let n = positions.len() / n_markers;
        let names = (0..n_markers).map(|i| format!("M{i}")).collect();
        MarkerTrack::new(FrameGrid::new(120.0, 0.0, n).unwrap(), names, positions).unwrap()
    }

    #[test]
    fn static_marker_has_zero_displacement() {
        let d = displacement_magnitudes(&track(vec![[1.0, 2.0, 3.0]; 5], 1)).unwrap();
        assert!(d.column_at(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_velocity_gives_norm() {
        let p = (0..6)
            .map(|i| [i as f64, 2.0 * i as f64, 2.0 * i as f64])
            .collect();
        let d = displacement_magnitudes(&track(p, 1)).unwrap();
        assert_eq!(d.column_at(0)[0], 0.0);
        assert!(d.column_at(0)[1..].iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn dropout_propagates_to_two_outputs() {
        let mut p = vec![[0.0; 3]; 6];
        p[3] = [DROPOUT; 3];
        let d = displacement_magnitudes(&track(p, 1)).unwrap();
        let c = d.column_at(0);
        assert!(is_dropout(c[3]) && is_dropout(c[4]));
        assert!(!is_dropout(c[2]) && !is_dropout(c[5]));
        assert!(matches!(
            displacement_magnitudes(&track(vec![[0.0; 3]], 1)),
            Err(Error::TooFewFrames { .. })
        ));
    }

    #[test]
    fn region_mean_skips_dropouts() {
        let g = FrameGrid::new(120.0, 0.0, 2).unwrap();
        let disp = FeatureTrack::new(
            g,
            vec!["a".into(), "b".into()],
            vec![vec![1.0, DROPOUT], vec![3.0, 5.0]],
        )
        .unwrap();
        let mut regions = IndexMap::new();
        regions.insert("r".to_string(), vec!["a".to_string(), "b".to_string()]);
        regions.insert("solo".to_string(), vec!["a".to_string()]);
        let act = region_activeness(&disp, &RegionMap::new(regions).unwrap()).unwrap();
        assert_eq!(act.column("r").unwrap(), &[2.0, 5.0]);
        assert_eq!(act.column("solo").unwrap()[0], 1.0);
        assert!(is_dropout(act.column("solo").unwrap()[1]));
    }

    #[test]
    fn unknown_marker_is_rejected() {
        let g = FrameGrid::new(120.0, 0.0, 1).unwrap();
        let disp = FeatureTrack::single(g, "a", vec![0.0]).unwrap();
        let mut regions = IndexMap::new();
        regions.insert("r".to_string(), vec!["zz".to_string()]);
        assert!(matches!(
            region_activeness(&disp, &RegionMap::new(regions).unwrap()),
            Err(Error::UnknownMarkerInMap { .. })
        ));
    }

    #[test]
    fn iemocap_map_is_anatomically_consistent() {
        let map = RegionMap::iemocap();
        map.validate_anatomy().unwrap();
        assert_eq!(map.names(), REGIONS.map(String::from).to_vec());
        assert_eq!(map.markers("mouth").unwrap().len(), 8);
        assert_eq!(map.markers("hands").unwrap().len(), 6);
        assert_eq!(map.markers("upper_face").unwrap().len(), 21);
        assert_eq!(map.markers("middle_face").unwrap().len(), 18);
        assert_eq!(map.markers("lower_face").unwrap().len(), 13);
        let back: RegionMap = serde_json::from_str(&map.to_json()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn broken_nesting_is_reported() {
        let mut map = RegionMap::iemocap();
        map.regions
            .get_mut("mouth")
            .unwrap()
            .push("FH1".to_string());
        assert!(map.validate_anatomy().is_err());
    }
}
