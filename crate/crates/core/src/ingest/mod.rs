//! Loading and pre-processing of raw session inputs.
//!
//! All loaders are pure functions of their file contents. Dropouts are kept
//! as explicit `NaN` values and never interpolated here.

mod audio;
mod emotion;
mod intervals;
mod markers;

pub use audio::{
    decode_wav, encode_wav_pcm16, load_wav, write_wav_pcm16, AudioClip, Channel, ChannelProfile,
};
pub use emotion::{
    load_emotion_frames, parse_emotion_frames, write_emotion_frames, EmotionCategory,
    EmotionTrack, EMOTION_COLUMNS,
};
pub use intervals::{load_transcript_intervals, write_intervals, SpeechInterval, SpeechIntervals};
pub use markers::{
    load_markers, load_markers_with_bound, markers_to_csv_string, parse_markers, write_markers,
    DEFAULT_COORD_BOUND_MM,
};

/// Head trim applied to every recording before analysis, in seconds.
pub const DEFAULT_HEAD_TRIM_S: f64 = 4.0;
