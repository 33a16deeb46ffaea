use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, parameters or file structure.
    Validation,
    /// Input data that parses but cannot be analyzed.
    Data,
    /// Numerical failure inside an estimator.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("channel index {requested} out of range for a {available}-channel clip")]
    ChannelOutOfRange { requested: usize, available: usize },
    #[error("cannot trim {trim_s} s from a {duration_s} s clip")]
    TrimExceedsDuration { trim_s: f64, duration_s: f64 },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("inconsistent marker set: {0}")]
    InconsistentMarkerSet(String),
    #[error("line {line}: time does not increase uniformly")]
    NonMonotoneTime { line: usize },
    #[error("line {line}: interval end {end} is not after start {start}")]
    InvertedInterval { line: usize, start: f64, end: f64 },
    #[error("line {line}: interval overlaps an earlier interval of speaker {speaker}")]
    SameSpeakerOverlap { line: usize, speaker: String },
    #[error("line {line}: {column} = {value} outside [-1, 1]")]
    ValueOutOfRange { line: usize, column: String, value: f64 },
    #[error("line {line}: unknown emotion category {value:?}")]
    UnknownCategory { line: usize, value: String },
    #[error("clip of {duration_s} s is shorter than the {window_s} s analysis window")]
    ClipShorterThanWindow { duration_s: f64, window_s: f64 },
    #[error("track has {frames} frames, at least {required} required")]
    TrackTooShort { frames: usize, required: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("frame grids differ: {0}")]
    GridMismatch(String),
    #[error("track is empty")]
    EmptyTrack,
    #[error("expected a {expected} Hz track, found {found} Hz")]
    RateMismatch { expected: f64, found: f64 },
    #[error("inputs do not share a usable time span: {0}")]
    NoTemporalOverlap(String),
    #[error("marker track has {frames} frames, at least {required} required")]
    TooFewFrames { frames: usize, required: usize },
    #[error("region {region} references marker {marker} which is not in the track")]
    UnknownMarkerInMap { region: String, marker: String },
    #[error("{frames} usable frames, more than {required} required")]
    InsufficientFrames { frames: usize, required: usize },
    #[error("degenerate regression input: {0}")]
    DegenerateInput(String),
    #[error("feature names do not match the fitted map: expected {expected:?}, found {found:?}")]
    FeatureNameMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{pairs} finite pairs, at least 3 required")]
    TooFewPairs { pairs: usize },
    #[error("unbalanced repeated-measures design: {0}")]
    UnbalancedDesign(String),
    #[error("{0} subjects, at least 2 required")]
    TooFewSubjects(usize),
    #[error("invalid degrees of freedom ({df1}, {df2})")]
    InvalidDegreesOfFreedom { df1: f64, df2: f64 },
    #[error("{0} values, at least 2 required")]
    TooFewValues(usize),
    #[error("inconsistent synthetic spec: {0}")]
    InconsistentSpec(String),
    #[error("noiseless signal has zero variance for region {0}")]
    ZeroSignalVariance(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InsufficientFrames { .. }
            | DegenerateInput(_)
            | TooFewPairs { .. }
            | ZeroSignalVariance(_) => ErrorKind::Numeric,
            EmptyAudio
            | TrimExceedsDuration { .. }
            | ClipShorterThanWindow { .. }
            | TrackTooShort { .. }
            | EmptyTrack
            | NoTemporalOverlap(_)
            | TooFewFrames { .. }
            | UnbalancedDesign(_)
            | TooFewSubjects(_)
            | TooFewValues(_)
            | ValueOutOfRange { .. }
            | UnknownCategory { .. }
            | InvertedInterval { .. }
            | SameSpeakerOverlap { .. } => ErrorKind::Data,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedRow {
            line,
            reason: reason.into(),
        }
    }
}
