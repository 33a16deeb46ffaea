use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emocouple::ingest::{write_emotion_frames, write_wav_pcm16, EmotionCategory, EmotionTrack};
use emocouple::synth::tone_complex;
use emocouple::FrameGrid;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_emocouple"));
    c.env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// SHA-256 of every file under `root`, keyed by relative path.
fn hashes(root: &Path) -> BTreeMap<PathBuf, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), hex);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// A small synthetic corpus plus its config, in `dir/syn`.
fn synth_corpus(dir: &Path, sessions: &str, duration: &str) -> PathBuf {
    let out = run(dir, &["synth", "--sessions", sessions, "--duration", duration, "--out-dir", "syn"]);
    ok(&out);
    dir.join("syn/config.json")
}

fn edit_config(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

/// Replace the first session's precomputed features by a tone WAV.
fn use_audio(dir: &Path, config: &Path, seconds: f64) {
    let clip = tone_complex(180.0, seconds, 16000, 6).unwrap();
    write_wav_pcm16(&clip, dir.join("syn/tone.wav")).unwrap();
    edit_config(config, |v| {
        let s = &mut v["sessions"][0];
        s.as_object_mut().unwrap().remove("speech_features");
        s["audio"] = "tone.wav".into();
    });
}

#[test]
fn features_from_audio_have_eighteen_columns_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "1", "20");
    use_audio(dir, &config, 20.0);
    let cfg = config.to_str().unwrap();
    ok(&run(dir, &["features", "--config", cfg, "--out-dir", "a"]));
    ok(&run(dir, &["features", "--config", cfg, "--out-dir", "b"]));

    let csv = std::fs::read_to_string(dir.join("a/sessions/synth_00/speech_features.csv")).unwrap();
    let header: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(header[0], "time_s");
    assert_eq!(header.len() - 1, 18);
    assert!(dir.join("a/sessions/synth_00/pca_model.json").is_file());
    assert_eq!(hashes(&dir.join("a")), hashes(&dir.join("b")));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "1", "10");
    edit_config(&config, |v| v["sessions"][0]["markers"] = "nowhere/markers.csv".into());
    let out = run(dir, &["features", "--config", config.to_str().unwrap(), "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere/markers.csv"), "{err}");
}

#[test]
fn error_json_is_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["align", "--config", "absent.json", "--error-json"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(v["exit_code"], 2);
    assert_eq!(v["kind"], "validation");
    assert!(v["message"].as_str().unwrap().contains("absent.json"));
}

#[test]
fn stages_need_their_upstream_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = synth_corpus(dir, "1", "10");
    let cfg = cfg.to_str().unwrap();
    for stage in ["align", "activeness", "map", "stats", "report"] {
        let out = run(dir, &[stage, "--config", cfg, "--out-dir", "empty", "--error-json"]);
        assert_eq!(out.status.code(), Some(2), "{stage}");
        let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
        assert_eq!(v["kind"], "missing_upstream_output", "{stage}");
    }
}

#[test]
fn align_writes_the_common_rate_and_rejects_disjoint_spans() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "1", "20");
    let cfg = config.to_str().unwrap();
    ok(&run(dir, &["features", "--config", cfg, "--out-dir", "o"]));
    ok(&run(dir, &["align", "--config", cfg, "--out-dir", "o"]));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("o/sessions/synth_00/session_table.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["grid"]["rate_hz"], 60.24);

    // Emotion estimates that start long after the recording ends.
    let grid = FrameGrid::new(10.0, 500.0, 100).unwrap();
    let late = EmotionTrack::new(
        grid,
        vec![0.1; 100],
        vec![-0.1; 100],
        vec![EmotionCategory::Neutral; 100],
        vec![1.0; 100],
    )
    .unwrap();
    write_emotion_frames(&late, dir.join("syn/synth_00/emotion.csv")).unwrap();
    let out = run(dir, &["align", "--config", cfg, "--out-dir", "o", "--error-json"]);
    assert_eq!(out.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert!(v["message"].as_str().unwrap().contains("common span"));
}

#[test]
fn full_run_is_deterministic_and_thread_count_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "3", "90");
    let cfg = config.to_str().unwrap();
    ok(&run(dir, &["run", "--config", cfg, "--out-dir", "a", "--jobs", "1"]));
    ok(&run(dir, &["run", "--config", cfg, "--out-dir", "b", "--jobs", "4"]));
    let (a, b) = (hashes(&dir.join("a")), hashes(&dir.join("b")));
    assert!(a.len() > 20, "{a:?}");
    assert_eq!(a, b);

    // Stage by stage into a third directory gives the same bytes.
    for stage in ["features", "align", "activeness", "map", "stats", "report"] {
        ok(&run(dir, &[stage, "--config", cfg, "--out-dir", "c"]));
    }
    assert_eq!(a, hashes(&dir.join("c")));

    // The generator itself is reproducible.
    ok(&run(dir, &["synth", "--sessions", "3", "--duration", "90", "--out-dir", "syn2"]));
    assert_eq!(hashes(&dir.join("syn")), hashes(&dir.join("syn2")));
}

#[test]
fn report_grids_have_the_documented_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "2", "90");
    ok(&run(dir, &["run", "--config", config.to_str().unwrap(), "--out-dir", "o"]));
    let report = dir.join("o/report");

    let grid = std::fs::read_to_string(report.join("activeness_grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    let cells: usize = lines[1..].iter().map(|l| l.split(',').count() - 1).sum();
    assert_eq!(cells, 64);
    assert!(lines[0].starts_with("region,Happy_non_overlap,Happy_overlap"));

    let svg = std::fs::read_to_string(report.join("activeness_grid.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), 64);
    assert!(svg.contains("colormap=linear low=#ffffff high=#08306b vmin=0"));

    let coupling = std::fs::read_to_string(report.join("coupling_grid_all.csv")).unwrap();
    assert_eq!(coupling.lines().next().unwrap(), "region,prosody,mfcc,arousal,valence");
    let svg = std::fs::read_to_string(report.join("coupling_grid_all.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), 8 * 4);

    // Each rect's fill is the linear colormap of its recorded value.
    for rect in svg.split("<rect").skip(1) {
        let attr = |name: &str| {
            let start = rect.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
            rect[start..start + rect[start..].find('"').unwrap()].to_string()
        };
        let value = attr("data-value");
        if value.is_empty() {
            assert_eq!(attr("fill"), "#cccccc");
            continue;
        }
        let t = value.parse::<f64>().unwrap().clamp(0.0, 1.0);
        let mix = |lo: f64, hi: f64| (lo + t * (hi - lo)).round() as u8;
        let expect = format!("#{:02x}{:02x}{:02x}", mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0));
        assert_eq!(attr("fill"), expect);
    }

    let comparison = std::fs::read_to_string(dir.join("o/paper_comparison_coupling.csv")).unwrap();
    assert!(comparison.contains("total_face,prosody,all,0.47,0.006,"));
    let anova = std::fs::read_to_string(dir.join("o/paper_comparison_anova.csv")).unwrap();
    assert!(anova.contains("mouth,condition,229.49,1,132,<.001,0.258,"));
}

#[test]
fn synthetic_couplings_track_their_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = synth_corpus(dir, "2", "120");
    edit_config(&config, |v| v["coupling"]["feature_sets"] = serde_json::json!(["speech"]));
    ok(&run(dir, &["run", "--config", config.to_str().unwrap(), "--out-dir", "o"]));
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("syn/synth_00/truth.json")).unwrap()).unwrap();
    let report = std::fs::read_to_string(dir.join("o/coupling_report.csv")).unwrap();
    for region in truth.as_array().unwrap() {
        let name = region["region"].as_str().unwrap();
        let target = region["theoretical_r"].as_f64().unwrap();
        let prefix = format!("{name},speech,all,none,all,");
        let row = report.lines().find(|l| l.starts_with(&prefix)).unwrap();
        let r: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        // Aligned frames pass through resampling, so allow a loose band.
        assert!((r - target).abs() < 0.1, "{name}: {r} vs {target}");
    }
}
