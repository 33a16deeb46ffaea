use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{is_dropout, FeatureTrack};

/// Eigenvalues below this fraction of the total variance count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Principal axes of a feature track, fitted once and then read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    /// One row per component, unit length, sorted by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|row| row.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, s) in self.components.iter().zip(scores) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += s * w;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Fit the top `k` principal axes of the column covariance.
///
/// Axes with (numerically) zero variance are dropped with a warning, so the
/// model may hold fewer than `k` components. Each axis is signed so that
/// its largest-magnitude loading is positive.
pub fn fit_pca(track: &FeatureTrack, k: usize) -> Result<PcaModel> {
    let n = track.n_frames();
    let d = track.n_columns();
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {k} components of {d} features"
        )));
    }
    if n <= d {
        return Err(Error::TooFewFrames {
            frames: n,
            required: d + 1,
        });
    }
    if let Some(name) = track
        .columns()
        .iter()
        .zip(track.data())
        .find(|(_, col)| col.iter().any(|v| is_dropout(*v)))
        .map(|(name, _)| name)
    {
        return Err(Error::InvalidParameter(format!(
            "column {name} has dropouts; PCA needs complete frames"
        )));
    }

    let mean: Vec<f64> = track.data().iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let ci = &track.data()[i];
        for j in i..d {
            let cj = &track.data()[j];
            let s: f64 = ci.iter().zip(cj).map(|(a, b)| (a - mean[i]) * (b - mean[j])).sum();
            cov[(i, j)] = s / (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let keep: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&i| trace > 0.0 && eig.eigenvalues[i] > RANK_TOLERANCE * trace)
        .collect();
    if keep.len() < k {
        log::warn!(
            "rank-deficient features: kept {} of {k} requested components",
            keep.len()
        );
    }
    if keep.is_empty() {
        return Err(Error::DegenerateInput("all features have zero variance".into()));
    }
    let components = keep
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let eigenvalues: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(PcaModel {
        columns: track.columns().to_vec(),
        mean,
        components,
        explained_variance_ratio: eigenvalues.iter().map(|e| e / trace).collect(),
        eigenvalues,
    })
}

/// Project every frame onto the model axes, giving columns `pc_1..pc_k`.
/// Frames with a dropout in any input column project to dropouts.
pub fn apply_pca(model: &PcaModel, track: &FeatureTrack) -> Result<FeatureTrack> {
    if track.n_columns() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: track.n_columns(),
        });
    }
    if track.columns() != model.columns.as_slice() {
        return Err(Error::FeatureNameMismatch {
            expected: model.columns.clone(),
            found: track.columns().to_vec(),
        });
    }
    let n = track.n_frames();
    let mut out = vec![vec![0.0; n]; model.n_components()];
    let mut row = vec![0.0; model.n_features()];
    for f in 0..n {
        for (slot, col) in row.iter_mut().zip(track.data()) {
            *slot = col[f];
        }
        for (dst, v) in out.iter_mut().zip(model.project(&row)) {
            dst[f] = v;
        }
    }
    let names = (1..=model.n_components()).map(|i| format!("pc_{i}")).collect();
    FeatureTrack::new(*track.grid(), names, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::FrameGrid;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn track(cols: Vec<Vec<f64>>) -> FeatureTrack {
        let g = FrameGrid::new(120.0, 0.0, cols[0].len()).unwrap();
        let names = (0..cols.len()).map(|i| format!("f{i}")).collect();
        FeatureTrack::new(g, names, cols).unwrap()
    }

    fn rank_two(n: usize, d: usize, seed: u64) -> FeatureTrack {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let u: Vec<f64> = (0..d).map(|_| g()).collect();
        let v: Vec<f64> = (0..d).map(|_| g()).collect();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (3.0 * g(), g())).unzip();
        track((0..d).map(|j| (0..n).map(|i| a[i] * u[j] + b[i] * v[j] + j as f64).collect()).collect())
    }

    #[test]
    fn rank_two_is_fully_explained() {
        let t = rank_two(200, 10, 1);
        let m = fit_pca(&t, 2).unwrap();
        assert!((m.cumulative_ratio() - 1.0).abs() < 1e-9);
        // Asking for more keeps only what exists.
        let m5 = fit_pca(&t, 5).unwrap();
        assert_eq!(m5.n_components(), 2);
    }

    #[test]
    fn reconstruct_low_rank_exactly() {
        let t = rank_two(100, 6, 2);
        let m = fit_pca(&t, 2).unwrap();
        let p = apply_pca(&m, &t).unwrap();
        for f in 0..t.n_frames() {
            let rec = m.reconstruct(&p.row(f));
            for (a, b) in rec.iter().zip(t.row(f)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(m.project(&m.mean).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn components_orthonormal_and_signed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cols = (0..8)
            .map(|j| (0..300).map(|_| (j + 1) as f64 * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect())
            .collect();
        let m = fit_pca(&track(cols), 8).unwrap();
        for (i, a) in m.components.iter().enumerate() {
            for (j, b) in m.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
            let pivot = a.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
        assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        let json = m.to_json();
        let back: PcaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn errors() {
        let t = rank_two(5, 6, 3);
        assert!(matches!(fit_pca(&t, 2), Err(Error::TooFewFrames { .. })));
        let t = rank_two(50, 6, 3);
        let m = fit_pca(&t, 2).unwrap();
        let narrow = rank_two(50, 5, 3);
        assert!(matches!(
            apply_pca(&m, &narrow),
            Err(Error::DimensionMismatch { expected: 6, found: 5 })
        ));
    }
}
