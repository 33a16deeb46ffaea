use emocouple::coupling::{bin_affect, fit_ammse, pearson_r, predict, BinPolicy};
use emocouple::ingest::{SpeechInterval, SpeechIntervals};
use emocouple::speech::{apply_pca, fit_pca, temporal_derivatives};
use emocouple::stats::{rm_anova_two_way, sem, RmDesign};
use emocouple::timeline::{rasterize_intervals, resample_linear};
use emocouple::{FeatureTrack, FrameGrid};
use proptest::prelude::*;

fn track(cols: Vec<Vec<f64>>) -> FeatureTrack {
    let g = FrameGrid::new(120.0, 0.0, cols[0].len()).unwrap();
    let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
    FeatureTrack::new(g, names, cols).unwrap()
}

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
}

fn varied(v: &[f64]) -> bool {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() > 1e-6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 5..60),
        scale in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        shift in -100.0f64..100.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(varied(&a) && varied(&b));
        let r = pearson_r(&a, &b).unwrap().unwrap();
        prop_assert!((r - pearson_r(&b, &a).unwrap().unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
        let moved: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        let r2 = pearson_r(&moved, &b).unwrap().unwrap();
        prop_assert!((r2 - scale.signum() * r).abs() < 1e-9);
    }

    #[test]
    fn deltas_are_linear(x in series(5..80), y_seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| ((i as u64 ^ y_seed) % 17) as f64 - v).collect();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let dx = temporal_derivatives(&track(vec![x])).unwrap();
        let dy = temporal_derivatives(&track(vec![y])).unwrap();
        let ds = temporal_derivatives(&track(vec![sum])).unwrap();
        for c in 1..3 {
            for f in 0..ds.n_frames() {
                let want = alpha * dx.value(f, c) + beta * dy.value(f, c);
                prop_assert!((ds.value(f, c) - want).abs() < 1e-7 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn ramp_delta_is_its_slope(n in 5usize..200, slope in -20.0f64..20.0, offset in -100.0f64..100.0) {
        let d = temporal_derivatives(&track(vec![(0..n).map(|i| offset + slope * i as f64).collect()])).unwrap();
        for f in 2..n - 2 {
            prop_assert!((d.value(f, 1) - slope).abs() < 1e-9);
            prop_assert!(d.value(f, 2).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_onto_own_grid_is_identity(x in series(2..200)) {
        let t = track(vec![x]);
        let same = resample_linear(&t, t.grid()).unwrap();
        for (a, b) in same.column_at(0).iter().zip(t.column_at(0)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_signals_resample_exactly(
        n in 10usize..300,
        rate in 5.0f64..200.0,
        slope in -5.0f64..5.0,
        offset in -5.0f64..5.0,
    ) {
        let src = FrameGrid::new(120.0, 0.25, n).unwrap();
        let f = |t: f64| offset + slope * t;
        let t = FeatureTrack::single(src, "x", src.timestamps().map(f).collect()).unwrap();
        let dst = FrameGrid::spanning(rate, src.start_s, src.last_s()).unwrap();
        let y = resample_linear(&t, &dst).unwrap();
        for (time, v) in dst.timestamps().zip(y.column_at(0)) {
            prop_assert!((v - f(time)).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_scores_are_uncorrelated(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 12..60),
    ) {
        let cols: Vec<Vec<f64>> = (0..4).map(|j| rows.iter().map(|r| r[j] + 0.5 * r[(j + 1) % 4]).collect()).collect();
        let t = track(cols);
        let m = fit_pca(&t, 4).unwrap();
        let s = apply_pca(&m, &t).unwrap();
        let n = s.n_frames() as f64;
        for i in 0..m.n_components() {
            for j in 0..m.n_components() {
                let (a, b) = (s.column_at(i), s.column_at(j));
                let cov = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (n - 1.0);
                let want = if i == j { m.eigenvalues[i] } else { 0.0 };
                prop_assert!((cov - want).abs() < 1e-8 * (1.0 + m.eigenvalues[0]));
            }
        }
    }

    #[test]
    fn predictions_ignore_invertible_feature_transforms(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -1.0f64..1.0), 10..80),
        k in 0.5f64..3.0,
    ) {
        let x: Vec<Vec<f64>> = vec![rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect()];
        prop_assume!(varied(&x[0]) && varied(&x[1]));
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r.0 - r.1 + r.2).collect();
        // x' = M x + c with M = [[k, 1], [0, 1]].
        let moved = vec![
            x[0].iter().zip(&x[1]).map(|(a, b)| k * a + b + 3.0).collect::<Vec<f64>>(),
            x[1].iter().map(|b| b - 1.0).collect(),
        ];
        let (xt, mt, yt) = (track(x), track(moved), track(vec![y]));
        let p1 = predict(&fit_ammse(&xt, &yt, 0.0).unwrap(), &xt).unwrap();
        let p2 = predict(&fit_ammse(&mt, &yt, 0.0).unwrap(), &mt).unwrap();
        for (a, b) in p1.column_at(0).iter().zip(p2.column_at(0)) {
            prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn affect_bins_partition_eligible_frames(
        v in prop::collection::vec(prop_oneof![-1.0f64..1.0, Just(0.0), Just(f64::NAN)], 1..100),
        mask in prop::collection::vec(any::<bool>(), 100),
        median in any::<bool>(),
    ) {
        let eligible = &mask[..v.len()];
        let policy = if median { BinPolicy::MedianSplit } else { BinPolicy::ZeroThreshold };
        let bins = bin_affect(&v, eligible, policy);
        for i in 0..v.len() {
            let usable = eligible[i] && v[i].is_finite();
            prop_assert!(!(bins.high[i] && bins.low[i]));
            prop_assert_eq!(bins.high[i] || bins.low[i], usable);
        }
    }

    #[test]
    fn sem_scales_with_values(v in prop::collection::vec(-100.0f64..100.0, 2..50), k in -5.0f64..5.0) {
        let scaled: Vec<f64> = v.iter().map(|x| k * x + 7.0).collect();
        prop_assert!((sem(&scaled).unwrap() - k.abs() * sem(&v).unwrap()).abs() < 1e-9 * (1.0 + sem(&v).unwrap()));
    }

    #[test]
    fn anova_components_sum_to_total(
        (n, values) in (3usize..=5).prop_flat_map(|n| (Just(n), prop::collection::vec(-10.0f64..10.0, n * 6))),
    ) {
        let d = RmDesign::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
            values,
        ).unwrap();
        let r = rm_anova_two_way(&d).unwrap();
        prop_assert!((r.ss_components() - r.ss_total).abs() < 1e-8 * (1.0 + r.ss_total));
        for e in &r.effects {
            prop_assert!((0.0..=1.0).contains(&e.p));
            prop_assert!(e.f >= 0.0);
        }
    }

    #[test]
    fn overlap_implies_speaking(
        turns in prop::collection::vec((0usize..3, 0.0f64..1.0, 0.01f64..2.0), 1..60),
        rate in 10.0f64..130.0,
    ) {
        let mut clock = [0.0f64; 3];
        let entries: Vec<SpeechInterval> = turns
            .into_iter()
            .map(|(s, gap, len)| {
                let start = clock[s] + gap;
                clock[s] = start + len;
                SpeechInterval { start_s: start, end_s: start + len, speaker: ["A", "B", "C"][s].into() }
            })
            .collect();
        let intervals = SpeechIntervals::new(entries).unwrap();
        let end = clock.iter().copied().fold(0.0, f64::max);
        let grid = FrameGrid::spanning(rate, 0.0, end + 0.5).unwrap();
        let labels = rasterize_intervals(&intervals, "A", &grid).unwrap();
        for f in 0..grid.n_frames {
            prop_assert!(labels.value(f, 1) <= labels.value(f, 0));
        }
    }

    #[test]
    fn track_csv_round_trips(cols in prop::collection::vec(series(3..30), 1..4)) {
        let n = cols.iter().map(Vec::len).min().unwrap();
        let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..n].to_vec()).collect();
        let t = track(cols);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        let back = FeatureTrack::read_csv(&path).unwrap();
        prop_assert_eq!(back.columns(), t.columns());
        prop_assert_eq!(back.data(), t.data());
        prop_assert_eq!(back.n_frames(), t.n_frames());
    }
}
