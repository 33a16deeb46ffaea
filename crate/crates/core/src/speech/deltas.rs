use crate::error::{Error, Result};
use crate::track::FeatureTrack;

pub const DELTA_SUFFIX: &str = "_delta";
pub const DELTA2_SUFFIX: &str = "_delta2";

const HALF_WIDTH: usize = 2;

/// Least-squares slope over frames `t - 2 ..= t + 2`, shrunk at the edges.
fn regression_slope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(HALF_WIDTH);
            let hi = (t + HALF_WIDTH).min(n - 1);
            let m = (hi - lo + 1) as f64;
            let centre = (lo + hi) as f64 / 2.0;
            let (mut num, mut den) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = j as f64 - centre;
                num += d * v;
                den += d * d;
            }
            debug_assert!(m >= 3.0);
            num / den
        })
        .collect()
}

/// Append `<col>_delta` and `<col>_delta2` after the static columns, grouped
/// per source column. Units are per frame.
pub fn temporal_derivatives(track: &FeatureTrack) -> Result<FeatureTrack> {
    let n = track.n_frames();
    if n < 2 * HALF_WIDTH + 1 {
        return Err(Error::TrackTooShort {
            frames: n,
            required: 2 * HALF_WIDTH + 1,
        });
    }
    let mut out = track.clone();
    for (name, col) in track.columns().iter().zip(track.data()) {
        let d1 = regression_slope(col);
        let d2 = regression_slope(&d1);
        out.push_column(format!("{name}{DELTA_SUFFIX}"), d1)?;
        out.push_column(format!("{name}{DELTA2_SUFFIX}"), d2)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::FrameGrid;

    fn one(values: Vec<f64>) -> FeatureTrack {
        let g = FrameGrid::new(120.0, 0.0, values.len()).unwrap();
        FeatureTrack::single(g, "x", values).unwrap()
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let t = temporal_derivatives(&one(vec![4.2; 9])).unwrap();
        assert_eq!(t.columns(), &["x", "x_delta", "x_delta2"]);
        for c in 1..3 {
            assert!(t.column_at(c).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ramp_slope_everywhere() {
        let m = -0.75;
        let t = temporal_derivatives(&one((0..12).map(|i| m * i as f64 + 3.0).collect())).unwrap();
        for v in t.column_at(1) {
            assert!((v - m).abs() < 1e-12);
        }
        for v in t.column_at(2) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_second_derivative_is_two() {
        // Symmetric 5-point slope of i^2 at t equals 2t exactly, and the
        // slope of 2t is 2; edges of the first pass reach 4 frames inward.
        let t = temporal_derivatives(&one((0..20).map(|i| (i * i) as f64).collect())).unwrap();
        let d1 = t.column_at(1);
        for (i, v) in d1.iter().enumerate().take(18).skip(2) {
            assert!((v - 2.0 * i as f64).abs() < 1e-9);
        }
        for v in &t.column_at(2)[4..16] {
            assert!((v - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            temporal_derivatives(&one(vec![0.0; 4])),
            Err(Error::TrackTooShort { frames: 4, .. })
        ));
    }
}
