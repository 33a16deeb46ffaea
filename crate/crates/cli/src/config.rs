//! The single JSON document that drives every stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use emocouple::coupling::{BinPolicy, FeatureSet, Protocol, DEFAULT_RIDGE_EPS};
use emocouple::ingest::{Channel, ChannelProfile, DEFAULT_HEAD_TRIM_S};
use emocouple::motion::{RegionMap, DEFAULT_MIN_SUPPORT_FRAMES, REGIONS};
use emocouple::speech::SpeechConfig;
use emocouple::timeline::SESSION_RATE_HZ;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const IEMOCAP_PROFILE: &str = "iemocap";
pub const GENERIC_PROFILE: &str = "generic";

/// Corpus conventions: which channel to analyze, how much audio to discard
/// and where the data lands in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Profile {
    pub channel: ChannelProfile,
    pub trim_s: f64,
    /// `None` falls back to the built-in facial layout.
    pub region_map: Option<PathBuf>,
    pub rate_hz: f64,
    pub min_span_s: f64,
}

impl Default for Profile {
    fn default() -> Self {
        Self {
            channel: ChannelProfile::fixed(Channel::Left),
            trim_s: 0.0,
            region_map: None,
            rate_hz: SESSION_RATE_HZ,
            min_span_s: 1.0,
        }
    }
}

impl Profile {
    pub fn iemocap() -> Self {
        Self {
            channel: ChannelProfile::iemocap(),
            trim_s: DEFAULT_HEAD_TRIM_S,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEntry {
    pub name: String,
    /// Grouping key for the repeated-measures statistics; defaults to `name`.
    #[serde(default)]
    pub subject: Option<String>,
    /// Recording session number, used by the channel profile.
    #[serde(default)]
    pub session_number: Option<u32>,
    pub target_speaker: String,
    /// Exactly one of `audio` and `speech_features` must be given.
    #[serde(default)]
    pub audio: Option<PathBuf>,
    #[serde(default)]
    pub speech_features: Option<PathBuf>,
    pub markers: PathBuf,
    pub transcript: PathBuf,
    pub emotion: PathBuf,
    #[serde(default)]
    pub channel: Option<Channel>,
    #[serde(default)]
    pub region_map: Option<PathBuf>,
}

impl SessionEntry {
    pub fn subject(&self) -> &str {
        self.subject.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaScope {
    /// One model per session.
    #[default]
    Session,
    /// One model fitted on the spectral frames of every session.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub scope: PcaScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub ridge_eps: f64,
    /// `in_sample`, `k_fold` or `k_fold_<k>`.
    pub protocol: String,
    pub bin_policy: BinPolicy,
    pub affect_derivatives: bool,
    pub feature_sets: Vec<String>,
    /// Empty means every region of the map.
    pub regions: Vec<String>,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            ridge_eps: DEFAULT_RIDGE_EPS,
            protocol: Protocol::default().to_string(),
            bin_policy: BinPolicy::default(),
            affect_derivatives: true,
            feature_sets: FeatureSet::ALL.iter().map(|f| f.name().to_string()).collect(),
            regions: Vec::new(),
        }
    }
}

impl CouplingSection {
    pub fn protocol(&self) -> Result<Protocol, Failure> {
        self.protocol.parse().map_err(Failure::from)
    }

    pub fn feature_sets(&self) -> Result<Vec<FeatureSet>, Failure> {
        self.feature_sets
            .iter()
            .map(|s| s.parse().map_err(Failure::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivenessSection {
    pub min_support_frames: usize,
}

impl Default for ActivenessSection {
    fn default() -> Self {
        Self {
            min_support_frames: DEFAULT_MIN_SUPPORT_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnovaSection {
    pub greenhouse_geisser: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub profile: String,
    /// Extra or overriding profiles; `iemocap` and `generic` are built in.
    pub profiles: BTreeMap<String, Profile>,
    pub sessions: Vec<SessionEntry>,
    pub region_map: Option<PathBuf>,
    pub speech: SpeechConfig,
    pub pca: PcaSection,
    pub coupling: CouplingSection,
    pub activeness: ActivenessSection,
    pub anova: AnovaSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            profile: IEMOCAP_PROFILE.into(),
            profiles: BTreeMap::new(),
            sessions: Vec::new(),
            region_map: None,
            speech: SpeechConfig::default(),
            pca: PcaSection::default(),
            coupling: CouplingSection::default(),
            activeness: ActivenessSection::default(),
            anova: AnovaSection::default(),
        }
    }
}

impl Config {
    /// Parse, resolve relative paths against the file's directory and
    /// validate.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        let mut config: Config = serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sessions {
            for p in [&mut s.audio, &mut s.speech_features, &mut s.region_map].into_iter().flatten() {
                fix(p);
            }
            fix(&mut s.markers);
            fix(&mut s.transcript);
            fix(&mut s.emotion);
        }
        if let Some(p) = &mut self.region_map {
            fix(p);
        }
        for profile in self.profiles.values_mut() {
            if let Some(p) = &mut profile.region_map {
                fix(p);
            }
        }
    }

    pub fn active_profile(&self) -> Result<Profile, Failure> {
        if let Some(p) = self.profiles.get(&self.profile) {
            return Ok(p.clone());
        }
        match self.profile.as_str() {
            IEMOCAP_PROFILE => Ok(Profile::iemocap()),
            GENERIC_PROFILE => Ok(Profile::default()),
            other => Err(Failure::validation(format!("unknown profile {other:?}"))),
        }
    }

    /// Session override, then the top-level map, then the profile, then the
    /// built-in layout.
    pub fn region_map_for(&self, session: &SessionEntry) -> Result<RegionMap, Failure> {
        let profile = self.active_profile()?;
        let path = session
            .region_map
            .as_ref()
            .or(self.region_map.as_ref())
            .or(profile.region_map.as_ref());
        match path {
            Some(p) => Ok(RegionMap::load(p)?),
            None => Ok(RegionMap::iemocap()),
        }
    }

    pub fn channel_for(&self, session: &SessionEntry) -> Result<Channel, Failure> {
        Ok(session
            .channel
            .unwrap_or(self.active_profile()?.channel.channel_for(session.session_number)))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let profile = self.active_profile()?;
        if !(profile.rate_hz > 0.0) || !(profile.trim_s >= 0.0) || !(profile.min_span_s > 0.0) {
            return Err(Failure::validation(format!(
                "profile {}: rate_hz and min_span_s must be positive, trim_s non-negative",
                self.profile
            )));
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.sessions {
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(Failure::validation(format!("bad session name {:?}", s.name)));
            }
            if !names.insert(&s.name) {
                return Err(Failure::validation(format!("duplicate session {}", s.name)));
            }
            match (&s.audio, &s.speech_features) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(Failure::validation(format!(
                        "session {}: give exactly one of audio and speech_features",
                        s.name
                    )))
                }
            }
            let files = [&s.audio, &s.speech_features, &s.region_map]
                .into_iter()
                .flatten()
                .chain([&s.markers, &s.transcript, &s.emotion]);
            for f in files {
                require_file(f)?;
            }
        }
        for p in self.region_map.iter().chain(profile.region_map.iter()) {
            require_file(p)?;
        }
        let sp = &self.speech;
        if !(sp.frame_rate_hz > 0.0 && sp.window_s > 0.0) {
            return Err(Failure::validation("speech frame rate and window must be positive"));
        }
        if !(sp.f0_min_hz > 0.0 && sp.f0_min_hz < sp.f0_max_hz) {
            return Err(Failure::validation("speech f0 range must satisfy 0 < min < max"));
        }
        if !(0.0..=1.0).contains(&sp.voicing_threshold) || !(0.0..=1.0).contains(&sp.silence_threshold) {
            return Err(Failure::validation("voicing and silence thresholds must lie in [0, 1]"));
        }
        if !(self.coupling.ridge_eps >= 0.0) {
            return Err(Failure::validation("coupling ridge_eps must be non-negative"));
        }
        self.coupling.protocol()?;
        if self.coupling.feature_sets()?.is_empty() {
            return Err(Failure::validation("coupling needs at least one feature set"));
        }
        for r in &self.coupling.regions {
            if !REGIONS.contains(&r.as_str()) && self.region_map.is_none() {
                log::warn!("coupling region {r} is not a standard region");
            }
        }
        Ok(())
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::validation(format!("missing input file {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: Config = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.active_profile().unwrap().trim_s, 4.0);
        assert_eq!(c.active_profile().unwrap().rate_hz, 60.24);
    }

    #[test]
    fn unknown_profile_is_rejected() {
        let c = Config {
            profile: "nope".into(),
            ..Config::default()
        };
        assert_eq!(c.validate().unwrap_err().code(), 2);
    }
}
