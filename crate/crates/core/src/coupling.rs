//! Affine speech-to-motion maps and their correlation scores.
//!
//! Covariances are accumulated sequentially in frame order (two passes: means,
//! then centered products), so every fit is bitwise reproducible.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::{DMatrix, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speech::{temporal_derivatives, PROSODY_COLUMNS, SPEECH_COLUMNS};
use crate::stats::sem;
use crate::timeline::{Condition, SessionTable};
use crate::track::{is_dropout, FeatureTrack};

pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;
pub const DEFAULT_FOLDS: usize = 5;

/// `y = A x + b`, fitted by least squares with a relative ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Row-major, one row per target.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub n_frames: usize,
    pub ridge_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

fn mean_over(col: &[f64], frames: &[usize]) -> f64 {
    frames.iter().map(|&f| col[f]).sum::<f64>() / frames.len() as f64
}

fn centered_cov(a: &[f64], ma: f64, b: &[f64], mb: f64, frames: &[usize]) -> f64 {
    frames.iter().map(|&f| (a[f] - ma) * (b[f] - mb)).sum::<f64>() / (frames.len() - 1) as f64
}

/// Fit on the listed frames of column-major inputs. Callers guarantee the
/// listed frames are finite in every column.
fn fit_on_frames(
    x: &[&[f64]],
    y: &[&[f64]],
    frames: &[usize],
    ridge_eps: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let dx = x.len();
    let dy = y.len();
    if frames.len() < dx + 2 {
        return Err(Error::InsufficientFrames {
            frames: frames.len(),
            required: dx + 1,
        });
    }
    let mx: Vec<f64> = x.iter().map(|c| mean_over(c, frames)).collect();
    let my: Vec<f64> = y.iter().map(|c| mean_over(c, frames)).collect();
    let mut cxx = DMatrix::<f64>::zeros(dx, dx);
    for i in 0..dx {
        for j in i..dx {
            let v = centered_cov(x[i], mx[i], x[j], mx[j], frames);
            cxx[(i, j)] = v;
            cxx[(j, i)] = v;
        }
    }
    let mut cxy = DMatrix::<f64>::zeros(dx, dy);
    for i in 0..dx {
        for k in 0..dy {
            cxy[(i, k)] = centered_cov(x[i], mx[i], y[k], my[k], frames);
        }
    }
    let trace = cxx.trace();
    if ridge_eps == 0.0 {
        if let Some(i) = (0..dx).find(|&i| cxx[(i, i)] <= 0.0) {
            return Err(Error::DegenerateInput(format!(
                "feature {i} is constant and the ridge is disabled"
            )));
        }
    }
    if !(trace > 0.0) {
        return Err(Error::DegenerateInput("every feature is constant".into()));
    }
    let lambda = ridge_eps * trace / dx as f64;
    for i in 0..dx {
        cxx[(i, i)] += lambda;
    }
    // Solve (Cxx + λI) Aᵀ = Cxy.
    let at = match cxx.clone().cholesky() {
        Some(ch) => ch.solve(&cxy),
        None => LU::new(cxx)
            .solve(&cxy)
            .ok_or_else(|| Error::DegenerateInput("singular feature covariance".into()))?,
    };
    if at.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("singular feature covariance".into()));
    }
    let a: Vec<Vec<f64>> = (0..dy).map(|k| (0..dx).map(|i| at[(i, k)]).collect()).collect();
    let b = (0..dy)
        .map(|k| my[k] - a[k].iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>())
        .collect();
    Ok((a, b))
}

fn check_grids(x: &FeatureTrack, y: &FeatureTrack) -> Result<()> {
    if x.grid().matches(y.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "features on {:?}, targets on {:?}",
            x.grid(),
            y.grid()
        )))
    }
}

fn finite_frames(x: &FeatureTrack, y: &FeatureTrack, keep: Option<&[bool]>) -> Vec<usize> {
    (0..x.n_frames())
        .filter(|&f| keep.is_none_or(|k| k[f]))
        .filter(|&f| {
            x.data().iter().chain(y.data()).all(|c| !is_dropout(c[f]))
        })
        .collect()
}

/// Affine MMSE map from the columns of `x` to the columns of `y`, using the
/// frames where every column is present. `ridge_eps` scales a diagonal
/// loading of `ridge_eps * tr(Cxx) / d_x`; zero gives plain least squares.
pub fn fit_ammse(x: &FeatureTrack, y: &FeatureTrack, ridge_eps: f64) -> Result<AffineMap> {
    check_grids(x, y)?;
    let frames = finite_frames(x, y, None);
    fit_subset(x, y, &frames, ridge_eps, None)
}

fn fit_subset(
    x: &FeatureTrack,
    y: &FeatureTrack,
    frames: &[usize],
    ridge_eps: f64,
    fold: Option<usize>,
) -> Result<AffineMap> {
    if !(ridge_eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge_eps = {ridge_eps}")));
    }
    let xs: Vec<&[f64]> = x.data().iter().map(Vec::as_slice).collect();
    let ys: Vec<&[f64]> = y.data().iter().map(Vec::as_slice).collect();
    let (a, b) = fit_on_frames(&xs, &ys, frames, ridge_eps)?;
    Ok(AffineMap {
        feature_names: x.columns().to_vec(),
        target_names: y.columns().to_vec(),
        a,
        b,
        n_frames: frames.len(),
        ridge_eps,
        fold,
    })
}

/// Per-frame `A x + b`; any dropout among a frame's inputs makes every output
/// of that frame a dropout.
pub fn predict(map: &AffineMap, x: &FeatureTrack) -> Result<FeatureTrack> {
    if x.columns() != map.feature_names.as_slice() {
        return Err(Error::FeatureNameMismatch {
            expected: map.feature_names.clone(),
            found: x.columns().to_vec(),
        });
    }
    let n = x.n_frames();
    let mut out = vec![vec![0.0; n]; map.target_names.len()];
    for f in 0..n {
        let row = x.row(f);
        let yhat = map.apply(&row);
        for (col, v) in out.iter_mut().zip(yhat) {
            col[f] = v;
        }
    }
    FeatureTrack::new(*x.grid(), map.target_names.clone(), out)
}

/// Sample Pearson correlation over the pairs where both sides are finite.
/// `Ok(None)` when either side has zero variance.
pub fn pearson_r(y: &[f64], y_hat: &[f64]) -> Result<Option<f64>> {
    let pairs: Vec<(f64, f64)> = y
        .iter()
        .zip(y_hat)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::TooFewPairs { pairs: pairs.len() });
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Prosody,
    Mfcc,
    Arousal,
    Valence,
    /// All 18 speech columns; not part of the standard report.
    Speech,
}

impl FeatureSet {
    /// The sets reported per region.
    pub const ALL: [FeatureSet; 4] = [Self::Prosody, Self::Mfcc, Self::Arousal, Self::Valence];

    pub fn name(self) -> &'static str {
        match self {
            Self::Prosody => "prosody",
            Self::Mfcc => "mfcc",
            Self::Arousal => "arousal",
            Self::Valence => "valence",
            Self::Speech => "speech",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .chain([Self::Speech])
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature set {s:?}")))
    }
}

/// Input columns of a feature set on the session grid. With
/// `affect_derivatives`, arousal and valence carry their Δ and ΔΔ.
pub fn feature_columns(
    table: &SessionTable,
    set: FeatureSet,
    affect_derivatives: bool,
) -> Result<FeatureTrack> {
    match set {
        FeatureSet::Prosody => table.block("speech")?.select(&PROSODY_COLUMNS),
        FeatureSet::Speech => table.block("speech")?.select(&SPEECH_COLUMNS),
        FeatureSet::Mfcc => {
            let names: Vec<String> = (1..=12).map(|i| format!("pc_{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            table.block("speech")?.select(&refs)
        }
        FeatureSet::Arousal | FeatureSet::Valence => {
            let single = table.block("emotion")?.select(&[set.name()])?;
            if affect_derivatives {
                temporal_derivatives(&single)
            } else {
                Ok(single)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    InSample,
    /// Contiguous blocks of the selected frames; each block is predicted by a
    /// map fitted on the others.
    KFold(usize),
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::KFold(DEFAULT_FOLDS)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::InSample => f.write_str("in_sample"),
            Protocol::KFold(k) => write!(f, "k_fold_{k}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    /// `in_sample`, `k_fold` (5 folds) or `k_fold_<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown protocol {s:?}"));
        match s {
            "in_sample" => Ok(Protocol::InSample),
            "k_fold" => Ok(Protocol::default()),
            _ => {
                let k: usize = s.strip_prefix("k_fold_").ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if k < 2 {
                    return Err(bad());
                }
                Ok(Protocol::KFold(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectDimension {
    Arousal,
    Valence,
}

impl AffectDimension {
    pub fn name(self) -> &'static str {
        match self {
            Self::Arousal => "arousal",
            Self::Valence => "valence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinPolicy {
    /// High means strictly above the session median over speaking frames.
    #[default]
    MedianSplit,
    /// High means strictly above zero.
    ZeroThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectBin {
    High,
    Low,
    All,
}

impl AffectBin {
    pub fn name(self) -> &'static str {
        match self {
            Self::High => "high",
            Self::Low => "low",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffectMasks {
    pub high: Vec<bool>,
    pub low: Vec<bool>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Split the eligible frames (eligible and finite) into high and low.
/// Values equal to the threshold go low, so an all-equal session is all low.
pub fn bin_affect(values: &[f64], eligible: &[bool], policy: BinPolicy) -> AffectMasks {
    let usable = |f: usize| eligible[f] && values[f].is_finite();
    let threshold = match policy {
        BinPolicy::ZeroThreshold => 0.0,
        BinPolicy::MedianSplit => {
            let mut v: Vec<f64> = (0..values.len()).filter(|&f| usable(f)).map(|f| values[f]).collect();
            if v.is_empty() {
                0.0
            } else {
                v.sort_by(f64::total_cmp);
                median(&v)
            }
        }
    };
    let high: Vec<bool> = (0..values.len()).map(|f| usable(f) && values[f] > threshold).collect();
    let low: Vec<bool> = (0..values.len()).map(|f| usable(f) && values[f] <= threshold).collect();
    if !high.iter().any(|&h| h) && low.iter().any(|&l| l) {
        log::warn!("affect split put every frame in the low bin (threshold {threshold})");
    }
    AffectMasks { high, low }
}

/// Affect bins of one session over its speaking frames.
pub fn bin_affect_table(
    table: &SessionTable,
    dimension: AffectDimension,
    policy: BinPolicy,
) -> Result<AffectMasks> {
    let values = table.column("emotion", dimension.name())?;
    let speaking: Vec<bool> = table.column("labels", "speaking")?.iter().map(|&s| s == 1.0).collect();
    Ok(bin_affect(values, &speaking, policy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectFilter {
    pub dimension: AffectDimension,
    pub bin: AffectBin,
    pub policy: BinPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ridge_eps: f64,
    pub protocol: Protocol,
    pub condition: Condition,
    pub affect: Option<AffectFilter>,
    pub affect_derivatives: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ridge_eps: DEFAULT_RIDGE_EPS,
            protocol: Protocol::default(),
            condition: Condition::All,
            affect: None,
            affect_derivatives: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingScore {
    /// `None` when the target or the prediction is constant.
    pub r: Option<f64>,
    pub n_frames: usize,
    /// One map for in-sample, one per fold otherwise.
    pub maps: Vec<AffineMap>,
}

/// Score a map from `x` to the single-column target `y` on the frames where
/// `keep` holds and every value is present.
pub fn evaluate_frames(
    x: &FeatureTrack,
    y: &FeatureTrack,
    keep: &[bool],
    protocol: Protocol,
    ridge_eps: f64,
) -> Result<MappingScore> {
    check_grids(x, y)?;
    if y.n_columns() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: y.n_columns(),
        });
    }
    let frames = finite_frames(x, y, Some(keep));
    let target = y.column_at(0);
    match protocol {
        Protocol::InSample => {
            let map = fit_subset(x, y, &frames, ridge_eps, None)?;
            let (truth, pred): (Vec<f64>, Vec<f64>) = frames
                .iter()
                .map(|&f| (target[f], map.apply(&x.row(f))[0]))
                .unzip();
            Ok(MappingScore {
                r: pearson_r(&truth, &pred)?,
                n_frames: frames.len(),
                maps: vec![map],
            })
        }
        Protocol::KFold(k) => {
            if k < 2 {
                return Err(Error::InvalidParameter(format!("{k} folds")));
            }
            if frames.len() < k {
                return Err(Error::InsufficientFrames {
                    frames: frames.len(),
                    required: k,
                });
            }
            let n = frames.len();
            let mut truth = Vec::with_capacity(n);
            let mut pred = Vec::with_capacity(n);
            let mut maps = Vec::with_capacity(k);
            for fold in 0..k {
                let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
                let train: Vec<usize> = frames[..lo].iter().chain(&frames[hi..]).copied().collect();
                let map = fit_subset(x, y, &train, ridge_eps, Some(fold))?;
                for &f in &frames[lo..hi] {
                    truth.push(target[f]);
                    pred.push(map.apply(&x.row(f))[0]);
                }
                maps.push(map);
            }
            Ok(MappingScore {
                r: pearson_r(&truth, &pred)?,
                n_frames: n,
                maps,
            })
        }
    }
}

/// Frames of a session admitted by the condition and affect filters.
pub fn selection_mask(table: &SessionTable, options: &EvalOptions) -> Result<Vec<bool>> {
    let mut keep = table.condition_mask(options.condition)?;
    if let Some(filter) = options.affect {
        let masks = bin_affect_table(table, filter.dimension, filter.policy)?;
        let bin = match filter.bin {
            AffectBin::High => Some(masks.high),
            AffectBin::Low => Some(masks.low),
            AffectBin::All => None,
        };
        if let Some(bin) = bin {
            keep.iter_mut().zip(bin).for_each(|(k, b)| *k &= b);
        }
    }
    Ok(keep)
}

/// Correlation between a region's activeness and its prediction from one
/// feature set, over speaking frames that pass the filters.
pub fn evaluate_mapping(
    table: &SessionTable,
    set: FeatureSet,
    region: &str,
    options: &EvalOptions,
) -> Result<MappingScore> {
    let x = feature_columns(table, set, options.affect_derivatives)?;
    let y = table.block("activeness")?.select(&[region])?;
    let keep = selection_mask(table, options)?;
    evaluate_frames(&x, &y, &keep, options.protocol, options.ridge_eps)
}

/// One cell of a coupling report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub region: String,
    pub feature_set: FeatureSet,
    pub condition: Condition,
    /// `None` for the unfiltered `all` bin.
    pub affect_dimension: Option<AffectDimension>,
    pub affect_bin: AffectBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: CellKey,
    pub mean_r: Option<f64>,
    pub sem: Option<f64>,
    pub n_dyads: usize,
    pub n_frames: usize,
}

/// Mean r and SEM across sessions, one row per cell in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub protocol: String,
    pub rows: Vec<ReportRow>,
}

impl CouplingReport {
    /// Aggregate per-session scores. Sessions whose r is undefined are left
    /// out of the mean; failed fits should not be passed in.
    pub fn aggregate(protocol: Protocol, scores: &[(CellKey, MappingScore)]) -> Self {
        let mut cells: IndexMap<&CellKey, (Vec<f64>, usize)> = IndexMap::new();
        for (key, score) in scores {
            let cell = cells.entry(key).or_default();
            if let Some(r) = score.r {
                cell.0.push(r);
            }
            cell.1 += score.n_frames;
        }
        let rows = cells
            .into_iter()
            .map(|(key, (rs, n_frames))| ReportRow {
                key: key.clone(),
                mean_r: (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64),
                sem: sem(&rs).ok(),
                n_dyads: rs.len(),
                n_frames,
            })
            .collect();
        Self {
            protocol: protocol.to_string(),
            rows,
        }
    }

    pub fn row(&self, key: &CellKey) -> Option<&ReportRow> {
        self.rows.iter().find(|r| &r.key == key)
    }

    pub fn to_csv_string(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from(
            "region,feature_set,condition,affect_dimension,affect_bin,protocol,mean_r,sem,n_dyads,n_frames\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.key.region,
                r.key.feature_set.name(),
                r.key.condition.name(),
                r.key.affect_dimension.map(|d| d.name()).unwrap_or("none"),
                r.key.affect_bin.name(),
                self.protocol,
                opt(r.mean_r),
                opt(r.sem),
                r.n_dyads,
                r.n_frames
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{FrameGrid, DROPOUT};

    fn track(names: &[&str], cols: Vec<Vec<f64>>) -> FeatureTrack {
        let g = FrameGrid::new(60.0, 0.0, cols[0].len()).unwrap();
        FeatureTrack::new(g, names.iter().map(|s| s.to_string()).collect(), cols).unwrap()
    }

    #[test]
    fn exact_scalar_affine() {
        let xs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = fit_ammse(&track(&["x"], vec![xs]), &track(&["y"], vec![ys]), 1e-8).unwrap();
        assert!((m.a[0][0] - 2.0).abs() < 1e-7);
        assert!((m.b[0] - 1.0).abs() < 1e-7);
        let m0 = fit_ammse(
            &track(&["x"], vec![vec![0.0, 1.0, 2.0, 3.0]]),
            &track(&["y"], vec![vec![1.0, 3.0, 5.0, 7.0]]),
            0.0,
        )
        .unwrap();
        assert!((m0.a[0][0] - 2.0).abs() < 1e-12 && (m0.b[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropouts_removed_pairwise() {
        let x = track(&["x"], vec![vec![0.0, 1.0, DROPOUT, 3.0, 4.0, 5.0]]);
        let y = track(&["y"], vec![vec![1.0, 3.0, 100.0, DROPOUT, 9.0, 11.0]]);
        let m = fit_ammse(&x, &y, 0.0).unwrap();
        assert_eq!(m.n_frames, 4);
        assert!((m.a[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_insufficient() {
        let x = track(&["x", "c"], vec![vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0; 5]]);
        let y = track(&["y"], vec![vec![0.0, 1.0, 2.0, 3.0, 5.0]]);
        assert!(matches!(fit_ammse(&x, &y, 0.0), Err(Error::DegenerateInput(_))));
        assert!(fit_ammse(&x, &y, 1e-8).is_ok());
        let short = track(&["x"], vec![vec![0.0, 1.0]]);
        let ys = track(&["y"], vec![vec![0.0, 1.0]]);
        assert!(matches!(
            fit_ammse(&short, &ys, 1e-8),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn predict_examples() {
        let x = track(&["a", "b"], vec![vec![1.0, 2.0, DROPOUT], vec![3.0, -1.0, 0.5]]);
        let id = AffineMap {
            feature_names: vec!["a".into(), "b".into()],
            target_names: vec!["p".into(), "q".into()],
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![0.0, 0.0],
            n_frames: 0,
            ridge_eps: 0.0,
            fold: None,
        };
        let p = predict(&id, &x).unwrap();
        assert_eq!(p.column_at(0)[..2], [1.0, 2.0]);
        assert_eq!(p.column_at(1)[..2], [3.0, -1.0]);
        assert!(is_dropout(p.column_at(0)[2]) && is_dropout(p.column_at(1)[2]));
        let other = track(&["b", "a"], vec![vec![0.0; 3], vec![0.0; 3]]);
        assert!(matches!(predict(&id, &other), Err(Error::FeatureNameMismatch { .. })));
    }

    #[test]
    fn pearson_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson_r(&y, &y).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson_r(&y, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
        let r = pearson_r(&y, &[2.0, 1.0, 4.0, 3.0]).unwrap().unwrap();
        assert!((r - 0.6).abs() < 1e-12);
        assert_eq!(pearson_r(&y, &[5.0; 4]).unwrap(), None);
        assert!(matches!(
            pearson_r(&[1.0, 2.0, f64::NAN], &[1.0, 2.0, 3.0]),
            Err(Error::TooFewPairs { pairs: 2 })
        ));
    }

    #[test]
    fn affect_bins() {
        let all = [true; 4];
        let m = bin_affect(&[-0.5, 0.1, 0.3, 0.8], &all, BinPolicy::MedianSplit);
        assert_eq!(m.low, [true, true, false, false]);
        assert_eq!(m.high, [false, false, true, true]);
        let eq = bin_affect(&[0.2; 4], &all, BinPolicy::MedianSplit);
        assert_eq!(eq.low, [true; 4]);
        assert_eq!(eq.high, [false; 4]);
        let z = bin_affect(&[-0.2, 0.4], &[true, true], BinPolicy::ZeroThreshold);
        assert_eq!((z.low, z.high), (vec![true, false], vec![false, true]));
        let some = bin_affect(&[-0.2, 0.4, 0.9], &[true, false, true], BinPolicy::ZeroThreshold);
        assert_eq!((some.low, some.high), (vec![true, false, false], vec![false, false, true]));
    }

    #[test]
    fn protocol_strings() {
        for p in [Protocol::InSample, Protocol::KFold(5), Protocol::KFold(10)] {
            assert_eq!(p.to_string().parse::<Protocol>().unwrap(), p);
        }
        assert_eq!("k_fold".parse::<Protocol>().unwrap(), Protocol::KFold(5));
        assert!("k_fold_1".parse::<Protocol>().is_err());
        assert!("loo".parse::<Protocol>().is_err());
    }

    #[test]
    fn kfold_scores_held_out_frames() {
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).sin() + 0.1 * (i as f64 * 1.7).cos()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 3.0 * x).collect();
        let x = track(&["x"], vec![xs]);
        let y = track(&["y"], vec![ys]);
        let keep = vec![true; n];
        for p in [Protocol::InSample, Protocol::KFold(5)] {
            let s = evaluate_frames(&x, &y, &keep, p, 1e-8).unwrap();
            assert!(s.r.unwrap() > 0.999_999);
            assert_eq!(s.n_frames, n);
        }
        let s = evaluate_frames(&x, &y, &keep, Protocol::KFold(4), 1e-8).unwrap();
        assert_eq!(s.maps.len(), 4);
        assert!(s.maps.iter().all(|m| m.n_frames == 150));
    }

    #[test]
    fn report_aggregates_over_sessions() {
        let key = CellKey {
            region: "mouth".into(),
            feature_set: FeatureSet::Prosody,
            condition: Condition::All,
            affect_dimension: None,
            affect_bin: AffectBin::All,
        };
        let score = |r| MappingScore {
            r,
            n_frames: 10,
            maps: vec![],
        };
        let rows = vec![
            (key.clone(), score(Some(0.4))),
            (key.clone(), score(Some(0.6))),
            (key.clone(), score(None)),
        ];
        let rep = CouplingReport::aggregate(Protocol::InSample, &rows);
        let row = rep.row(&key).unwrap();
        assert!((row.mean_r.unwrap() - 0.5).abs() < 1e-12);
        assert!((row.sem.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!((row.n_dyads, row.n_frames), (2, 30));
        let csv = rep.to_csv_string();
        assert!(csv.lines().nth(1).unwrap().starts_with("mouth,prosody,all,none,all,in_sample,"));
    }
}
