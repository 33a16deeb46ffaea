//! Stage implementations. Every stage reads its inputs from the config and
//! the output directory, computes sessions in parallel and writes results in
//! session order, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use emocouple::coupling::{
    evaluate_mapping, AffectBin, AffectDimension, AffectFilter, AffineMap, CellKey, CouplingReport,
    EvalOptions, FeatureSet, MappingScore, Protocol,
};
use emocouple::ingest::{load_emotion_frames, load_markers, load_transcript_intervals, load_wav, EmotionCategory};
use emocouple::motion::{condition_summaries, displacement_magnitudes, region_activeness, SummaryCell};
use emocouple::speech::{
    analyze_clip, apply_pca, assemble_speech_features, fit_pca, PcaModel, SpeechAnalysis, N_PCA_COMPONENTS,
    SPEECH_COLUMNS,
};
use emocouple::stats::{anova_csv, rm_anova_two_way_with, AnovaOptions, AnovaResult, CellValue, RmDesign};
use emocouple::synth::{generate_coupled_session, write_session, SynthSpec, TARGET_SPEAKER};
use emocouple::timeline::{align_session, AlignOptions, Condition, SessionTable};
use emocouple::{ErrorKind, FeatureTrack, FrameGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, PcaScope, Profile, SessionEntry};
use crate::failure::{write_file, Context, Failure};
use crate::reference;

pub const ANOVA_EFFECTS: [&str; 3] = ["emotion", "condition", "emotion_x_condition"];
pub const CONDITIONS: [Condition; 2] = [Condition::NonOverlap, Condition::Overlap];

/// Where each stage puts its files under `--out-dir`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn session(&self, name: &str) -> PathBuf {
        self.root.join("sessions").join(name)
    }

    pub fn speech_features(&self, name: &str) -> PathBuf {
        self.session(name).join("speech_features.csv")
    }

    pub fn session_table(&self, name: &str) -> (PathBuf, PathBuf) {
        let dir = self.session(name);
        (dir.join("session_table.csv"), dir.join("session_table.json"))
    }

    pub fn activeness_summary(&self) -> PathBuf {
        self.root.join("activeness_summary.csv")
    }

    pub fn coupling_report(&self) -> PathBuf {
        self.root.join("coupling_report.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path, stage: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::missing_upstream(path, stage))
    }
}

/// Run `f` on every session in parallel and return the results in config
/// order; the first failing session (in config order) wins.
fn per_session<T: Send>(
    config: &Config,
    f: impl Fn(&SessionEntry) -> Result<T, Failure> + Sync,
) -> Result<Vec<T>, Failure> {
    let results: Vec<Result<T, Failure>> = config
        .sessions
        .par_iter()
        .map(|s| f(s).map_err(|e| e.context(format!("session {}", s.name))))
        .collect();
    results.into_iter().collect()
}

fn need_sessions(config: &Config) -> Result<(), Failure> {
    if config.sessions.is_empty() {
        return Err(Failure::validation("config lists no sessions"));
    }
    Ok(())
}

// ---------------------------------------------------------------- features

enum SpeechSource {
    Analysis(SpeechAnalysis),
    Precomputed(FeatureTrack),
}

fn load_speech(config: &Config, profile: &Profile, s: &SessionEntry) -> Result<SpeechSource, Failure> {
    if let Some(path) = &s.speech_features {
        let track = FeatureTrack::read_csv(path).context(path.display())?;
        if track.columns() != SPEECH_COLUMNS {
            return Err(Failure::validation(format!(
                "{}: expected the {} speech columns {:?}",
                path.display(),
                SPEECH_COLUMNS.len(),
                SPEECH_COLUMNS
            )));
        }
        return Ok(SpeechSource::Precomputed(track));
    }
    let path = s.audio.as_ref().expect("validated: audio or speech_features");
    let clip = load_wav(path).context(path.display())?;
    let clip = if clip.n_channels() > 1 {
        clip.select_channel(config.channel_for(s)?)?
    } else {
        clip
    };
    let clip = clip.trim_head(profile.trim_s).context(path.display())?;
    Ok(SpeechSource::Analysis(analyze_clip(&clip, &config.speech)?))
}

/// Stack the spectral frames of several sessions for one shared model.
fn stacked_spectral(analyses: &[&SpeechAnalysis]) -> Result<FeatureTrack, Failure> {
    let first = &analyses[0].spectral;
    let n: usize = analyses.iter().map(|a| a.spectral.n_frames()).sum();
    let data = (0..first.n_columns())
        .map(|c| analyses.iter().flat_map(|a| a.spectral.column_at(c).iter().copied()).collect())
        .collect();
    Ok(FeatureTrack::new(FrameGrid::new(first.grid().rate_hz, 0.0, n)?, first.columns().to_vec(), data)?)
}

pub fn features(config: &Config, layout: &Layout) -> Result<(), Failure> {
    need_sessions(config)?;
    let profile = config.active_profile()?;
    let sources = per_session(config, |s| load_speech(config, &profile, s))?;

    let corpus_model = match config.pca.scope {
        PcaScope::Session => None,
        PcaScope::Corpus => {
            let analyses: Vec<&SpeechAnalysis> = sources
                .iter()
                .filter_map(|s| match s {
                    SpeechSource::Analysis(a) => Some(a),
                    SpeechSource::Precomputed(_) => None,
                })
                .collect();
            if analyses.is_empty() {
                None
            } else {
                Some(fit_pca(&stacked_spectral(&analyses)?, N_PCA_COMPONENTS).context("corpus PCA")?)
            }
        }
    };
    let outputs: Vec<(FeatureTrack, Option<PcaModel>)> = config
        .sessions
        .par_iter()
        .zip(&sources)
        .map(|(s, src)| -> Result<_, Failure> {
            match src {
                SpeechSource::Precomputed(t) => Ok((t.clone(), None)),
                SpeechSource::Analysis(a) => {
                    let model = match &corpus_model {
                        Some(m) => m.clone(),
                        None => fit_pca(&a.spectral, N_PCA_COMPONENTS)?,
                    };
                    let pcs = apply_pca(&model, &a.spectral)?;
                    Ok((assemble_speech_features(&pcs, &a.prosody)?, Some(model)))
                }
            }
            .map_err(|e: Failure| e.context(format!("session {}", s.name)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    for (s, (track, model)) in config.sessions.iter().zip(&outputs) {
        write_file(&layout.speech_features(&s.name), track.to_csv_string())?;
        if let Some(m) = model {
            write_file(&layout.session(&s.name).join("pca_model.json"), m.to_json() + "\n")?;
        }
    }
    if let Some(m) = &corpus_model {
        write_file(&layout.root.join("pca_model.json"), m.to_json() + "\n")?;
    }
    Ok(())
}

// ------------------------------------------------------------------- align

pub fn align(config: &Config, layout: &Layout) -> Result<(), Failure> {
    need_sessions(config)?;
    let profile = config.active_profile()?;
    let options = AlignOptions {
        rate_hz: profile.rate_hz,
        min_span_s: profile.min_span_s,
    };
    let tables = per_session(config, |s| {
        let speech_path = layout.speech_features(&s.name);
        require(&speech_path, "features")?;
        let speech = FeatureTrack::read_csv(&speech_path).context(speech_path.display())?;
        let markers = load_markers(&s.markers).context(s.markers.display())?;
        let map = config.region_map_for(s)?;
        let activeness = region_activeness(&displacement_magnitudes(&markers)?, &map)?;
        let emotion = load_emotion_frames(&s.emotion).context(s.emotion.display())?;
        let intervals = load_transcript_intervals(&s.transcript).context(s.transcript.display())?;
        let table = align_session(&speech, &emotion, &activeness, &intervals, &s.target_speaker, &options)?;
        Ok((activeness, table))
    })?;
    for (s, (activeness, table)) in config.sessions.iter().zip(&tables) {
        write_file(&layout.session(&s.name).join("activeness.csv"), activeness.to_csv_string())?;
        let (csv, json) = layout.session_table(&s.name);
        write_file(&csv, table.flattened().to_csv_string())?;
        write_file(&json, table.sidecar_json())?;
    }
    Ok(())
}

fn load_table(layout: &Layout, name: &str) -> Result<SessionTable, Failure> {
    let (csv, json) = layout.session_table(name);
    require(&csv, "align")?;
    require(&json, "align")?;
    SessionTable::read(&csv, &json).context(csv.display())
}

// -------------------------------------------------------------- activeness

const SUMMARY_HEADER: &str = "session,subject,region,emotion,condition,mean,sem,n_frames,low_support\n";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_rows(out: &mut String, s: &SessionEntry, cells: &[SummaryCell]) {
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.name,
            s.subject(),
            c.region,
            c.emotion.name(),
            c.condition.name(),
            opt(c.mean),
            opt(c.sem),
            c.n_frames,
            c.low_support
        );
    }
}

pub fn activeness(config: &Config, layout: &Layout) -> Result<(), Failure> {
    need_sessions(config)?;
    let min = config.activeness.min_support_frames;
    let summaries = per_session(config, |s| {
        let table = load_table(layout, &s.name)?;
        Ok(condition_summaries(table.block("activeness")?, &table, min)?)
    })?;
    let mut corpus = String::from(SUMMARY_HEADER);
    for (s, cells) in config.sessions.iter().zip(&summaries) {
        let mut one = String::from(SUMMARY_HEADER);
        summary_rows(&mut one, s, cells);
        summary_rows(&mut corpus, s, cells);
        write_file(&layout.session(&s.name).join("activeness_summary.csv"), one)?;
        let low = cells.iter().filter(|c| c.low_support).count();
        if low > 0 {
            log::warn!("session {}: {low} summary cells have fewer than {min} frames", s.name);
        }
    }
    write_file(&layout.activeness_summary(), corpus)
}

/// One parsed row of the corpus activeness summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub session: String,
    pub subject: String,
    pub region: String,
    pub emotion: String,
    pub condition: String,
    pub mean: Option<f64>,
    pub n_frames: usize,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, why: &str| Failure::validation(format!("{}:{line}: {why}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SUMMARY_HEADER.trim() => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 9 {
                return Err(bad(i + 1, "expected 9 fields"));
            }
            let mean = match f[5] {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad(i + 1, "bad mean"))?),
            };
            Ok(SummaryRow {
                session: f[0].into(),
                subject: f[1].into(),
                region: f[2].into(),
                emotion: f[3].into(),
                condition: f[4].into(),
                mean,
                n_frames: f[7].parse().map_err(|_| bad(i + 1, "bad n_frames"))?,
            })
        })
        .collect()
}

/// Frame-weighted mean per key over the rows with a defined mean.
pub fn weighted_means<K: Ord>(rows: &[SummaryRow], key: impl Fn(&SummaryRow) -> K) -> BTreeMap<K, (f64, usize)> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let (Some(m), true) = (r.mean, r.n_frames > 0) {
            let e = acc.entry(key(r)).or_default();
            e.0 += m * r.n_frames as f64;
            e.1 += r.n_frames;
        }
    }
    for v in acc.values_mut() {
        v.0 /= v.1 as f64;
    }
    acc
}

fn region_order(rows: &[SummaryRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.region) {
            out.push(r.region.clone());
        }
    }
    out
}

// ------------------------------------------------------------------- stats

pub fn stats(config: &Config, layout: &Layout) -> Result<(), Failure> {
    let path = layout.activeness_summary();
    require(&path, "activeness")?;
    let rows = read_summary(&path)?;
    let emotions: Vec<String> = EmotionCategory::ALL.iter().map(|e| e.name().to_string()).collect();
    let conditions: Vec<String> = CONDITIONS.iter().map(|c| c.name().to_string()).collect();
    let options = AnovaOptions {
        greenhouse_geisser: config.anova.greenhouse_geisser,
    };
    let means = weighted_means(&rows, |r| {
        (r.region.clone(), r.subject.clone(), r.emotion.clone(), r.condition.clone())
    });
    let mut results: Vec<(String, AnovaResult)> = Vec::new();
    let mut first_error = None;
    for region in region_order(&rows) {
        let records: Vec<CellValue> = means
            .iter()
            .filter(|((reg, ..), _)| *reg == region)
            .map(|((_, subject, emotion, condition), (m, _))| CellValue {
                subject: subject.clone(),
                a: emotion.clone(),
                b: condition.clone(),
                value: *m,
            })
            .collect();
        let outcome = RmDesign::from_records_listwise(&records, &emotions, &conditions)
            .and_then(|(d, _)| rm_anova_two_way_with(&d, options));
        match outcome {
            Ok(r) => results.push((region, r)),
            Err(e) => {
                log::warn!("{region}: ANOVA skipped: {e}");
                first_error.get_or_insert(Failure::from(e).context(format!("region {region}")));
            }
        }
    }
    if results.is_empty() {
        return Err(first_error.unwrap_or_else(|| Failure::validation("activeness summary has no rows")));
    }
    write_file(&layout.root.join("anova.csv"), anova_csv(&results, ANOVA_EFFECTS))?;
    write_file(
        &layout.root.join("paper_comparison_anova.csv"),
        reference::anova_comparison(&results),
    )
}

// --------------------------------------------------------------------- map

fn affect_filters() -> Vec<(Option<AffectDimension>, AffectBin)> {
    let mut out = vec![(None, AffectBin::All)];
    for d in [AffectDimension::Arousal, AffectDimension::Valence] {
        for b in [AffectBin::High, AffectBin::Low] {
            out.push((Some(d), b));
        }
    }
    out
}

#[derive(Serialize)]
struct MapRecord<'a> {
    session: &'a str,
    region: &'a str,
    feature_set: &'static str,
    map: &'a AffineMap,
}

struct SessionScores {
    cells: Vec<(CellKey, MappingScore)>,
    /// In-sample maps over all speaking frames, one per region and set.
    maps: Vec<(String, FeatureSet, AffineMap)>,
}

fn score_session(config: &Config, table: &SessionTable, protocol: Protocol) -> Result<SessionScores, Failure> {
    let c = &config.coupling;
    let sets = c.feature_sets()?;
    let regions: Vec<String> = if c.regions.is_empty() {
        table.block("activeness")?.columns().to_vec()
    } else {
        c.regions.clone()
    };
    let base = EvalOptions {
        ridge_eps: c.ridge_eps,
        protocol,
        condition: Condition::All,
        affect: None,
        affect_derivatives: c.affect_derivatives,
    };
    let skipped = std::cell::Cell::new(0usize);
    let skip = |e: emocouple::Error, what: &dyn Fn() -> String| -> Result<(), Failure> {
        if e.kind() == ErrorKind::Numeric {
            log::debug!("{}: skipped: {e}", what());
            skipped.set(skipped.get() + 1);
            Ok(())
        } else {
            Err(Failure::from(e).context(what()))
        }
    };
    let mut cells = Vec::new();
    let mut maps = Vec::new();
    for region in &regions {
        for &set in &sets {
            for condition in [Condition::All, Condition::NonOverlap, Condition::Overlap] {
                for (dimension, bin) in affect_filters() {
                    let options = EvalOptions {
                        condition,
                        affect: dimension.map(|dimension| AffectFilter {
                            dimension,
                            bin,
                            policy: c.bin_policy,
                        }),
                        ..base
                    };
                    let key = CellKey {
                        region: region.clone(),
                        feature_set: set,
                        condition,
                        affect_dimension: dimension,
                        affect_bin: bin,
                    };
                    match evaluate_mapping(table, set, region, &options) {
                        Ok(score) => cells.push((key, score)),
                        Err(e) => skip(e, &|| {
                            format!(
                                "{region}/{}/{}/{}",
                                set.name(),
                                condition.name(),
                                dimension.map(|d| d.name()).unwrap_or("none")
                            )
                        })?,
                    }
                }
            }
            let in_sample = EvalOptions {
                protocol: Protocol::InSample,
                ..base
            };
            match evaluate_mapping(table, set, region, &in_sample) {
                Ok(mut score) => maps.push((region.clone(), set, score.maps.remove(0))),
                Err(e) => skip(e, &|| format!("{region}/{} in-sample map", set.name()))?,
            }
        }
    }
    if skipped.get() > 0 {
        log::warn!("{} cells skipped for lack of usable frames or variance", skipped.get());
    }
    Ok(SessionScores { cells, maps })
}

pub fn map(config: &Config, layout: &Layout) -> Result<(), Failure> {
    need_sessions(config)?;
    let protocol = config.coupling.protocol()?;
    let scores = per_session(config, |s| {
        let table = load_table(layout, &s.name)?;
        score_session(config, &table, protocol)
    })?;

    let mut per_session = String::from(
        "session,subject,region,feature_set,condition,affect_dimension,affect_bin,protocol,r,n_frames\n",
    );
    let mut all = Vec::new();
    let mut records = Vec::new();
    for (s, sc) in config.sessions.iter().zip(&scores) {
        for (key, score) in &sc.cells {
            let _ = writeln!(
                per_session,
                "{},{},{},{},{},{},{},{},{},{}",
                s.name,
                s.subject(),
                key.region,
                key.feature_set.name(),
                key.condition.name(),
                key.affect_dimension.map(|d| d.name()).unwrap_or("none"),
                key.affect_bin.name(),
                protocol,
                opt(score.r),
                score.n_frames
            );
            all.push((key.clone(), score.clone()));
        }
        for (region, set, m) in &sc.maps {
            records.push(MapRecord {
                session: &s.name,
                region,
                feature_set: set.name(),
                map: m,
            });
        }
    }
    let report = CouplingReport::aggregate(protocol, &all);
    write_file(&layout.coupling_report(), report.to_csv_string())?;
    write_file(&layout.root.join("coupling_sessions.csv"), per_session)?;
    write_file(
        &layout.root.join("affine_maps.json"),
        serde_json::to_string_pretty(&records).expect("maps serialize") + "\n",
    )?;
    write_file(
        &layout.root.join("paper_comparison_coupling.csv"),
        reference::coupling_comparison(&report),
    )
}

// ------------------------------------------------------------------- synth

/// Correlations the default synthetic corpus aims for, per region.
pub const DEFAULT_SYNTH_TARGETS: [(&str, f64); 8] = [
    ("head", 0.35),
    ("eyebrows", 0.4),
    ("mouth", 0.6),
    ("upper_face", 0.45),
    ("middle_face", 0.5),
    ("lower_face", 0.65),
    ("total_face", 0.7),
    ("hands", 0.3),
];

pub const SYNTH_PROFILE: &str = "synthetic";

/// Two-minute sessions with frequent overlapping speech, so every emotion
/// and speech condition cell gets frames.
pub fn default_synth_spec() -> Result<SynthSpec, Failure> {
    let mut spec = SynthSpec::with_target_correlations(0, 120.0, &DEFAULT_SYNTH_TARGETS)?;
    spec.turns.overlap_probability = 0.8;
    spec.turns.overlap_s = 1.2;
    Ok(spec)
}

pub struct SynthRequest {
    pub spec: Option<SynthSpec>,
    pub sessions: usize,
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
}

pub fn synth(request: &SynthRequest, layout: &Layout) -> Result<PathBuf, Failure> {
    if request.sessions == 0 {
        return Err(Failure::validation("--sessions must be at least 1"));
    }
    let base = match &request.spec {
        Some(s) => s.clone(),
        None => default_synth_spec()?,
    };
    let seed = request.seed.unwrap_or(base.seed);
    let specs: Vec<SynthSpec> = (0..request.sessions)
        .map(|k| SynthSpec {
            seed: seed.wrapping_add(k as u64),
            duration_s: request.duration_s.unwrap_or(base.duration_s),
            ..base.clone()
        })
        .collect();
    let sessions: Vec<_> = specs
        .par_iter()
        .map(generate_coupled_session)
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::new();
    for (k, (spec, session)) in specs.iter().zip(&sessions).enumerate() {
        let name = format!("synth_{k:02}");
        let files = write_session(spec, session, layout.root.join(&name))?;
        let rel = |p: &Path| PathBuf::from(&name).join(p.file_name().expect("file name"));
        entries.push(SessionEntry {
            name: name.clone(),
            subject: Some(name.clone()),
            session_number: None,
            target_speaker: TARGET_SPEAKER.into(),
            audio: None,
            speech_features: Some(rel(&files.speech_features)),
            markers: rel(&files.markers),
            transcript: rel(&files.transcript),
            emotion: rel(&files.emotion),
            channel: None,
            region_map: Some(rel(&files.region_map)),
        });
    }
    let mut config = Config {
        profile: SYNTH_PROFILE.into(),
        sessions: entries,
        ..Config::default()
    };
    config.profiles.insert(
        SYNTH_PROFILE.into(),
        Profile {
            trim_s: 0.0,
            ..Profile::default()
        },
    );
    let path = layout.root.join("config.json");
    write_file(&path, serde_json::to_string_pretty(&config).expect("config serializes") + "\n")?;
    Ok(path)
}
