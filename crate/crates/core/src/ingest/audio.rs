//! WAV decoding, channel isolation and head trimming.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoded audio with per-channel sample access. Samples lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: u32,
    /// Time of the first sample relative to the original recording.
    start_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Left,
    Right,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::Left => 0,
            Channel::Right => 1,
        }
    }
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if channels.is_empty() || channels[0].is_empty() {
            return Err(Error::EmptyAudio);
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidParameter("channels differ in length".into()));
        }
        if channels
            .iter()
            .flatten()
            .any(|s| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidParameter(
                "samples must be finite and within [-1, 1]".into(),
            ));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
            start_s: 0.0,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate_hz)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz as f64
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn with_start(mut self, start_s: f64) -> Self {
        self.start_s = start_s;
        self
    }

    pub fn channel(&self, index: usize) -> Option<&[f64]> {
        self.channels.get(index).map(Vec::as_slice)
    }

    /// Samples of a single-channel clip.
    pub fn mono_samples(&self) -> Result<&[f64]> {
        if self.channels.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected a mono clip, found {} channels",
                self.channels.len()
            )));
        }
        Ok(&self.channels[0])
    }

    pub fn select_channel(&self, channel: Channel) -> Result<AudioClip> {
        let idx = channel.index();
        let samples = self
            .channels
            .get(idx)
            .ok_or(Error::ChannelOutOfRange {
                requested: idx,
                available: self.channels.len(),
            })?
            .clone();
        Ok(AudioClip {
            channels: vec![samples],
            sample_rate_hz: self.sample_rate_hz,
            start_s: self.start_s,
        })
    }

    /// Drop the first `round(seconds * rate)` samples and advance `start_s`.
    pub fn trim_head(&self, seconds: f64) -> Result<AudioClip> {
        if !(seconds >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "trim must be non-negative, got {seconds}"
            )));
        }
        if seconds >= self.duration_s() && seconds > 0.0 {
            return Err(Error::TrimExceedsDuration {
                trim_s: seconds,
                duration_s: self.duration_s(),
            });
        }
        let drop = (seconds * self.sample_rate_hz as f64).round() as usize;
        if drop >= self.n_samples() {
            return Err(Error::TrimExceedsDuration {
                trim_s: seconds,
                duration_s: self.duration_s(),
            });
        }
        Ok(AudioClip {
            channels: self.channels.iter().map(|c| c[drop..].to_vec()).collect(),
            sample_rate_hz: self.sample_rate_hz,
            start_s: self.start_s + seconds,
        })
    }
}

/// Which channel carries the target speaker for a numbered recording session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub default: Channel,
    #[serde(default)]
    pub sessions: BTreeMap<u32, Channel>,
}

impl ChannelProfile {
    pub fn fixed(channel: Channel) -> Self {
        Self {
            default: channel,
            sessions: BTreeMap::new(),
        }
    }

    /// Left-positioned speaker: front-left for session 1, front-right for 2-5.
    pub fn iemocap() -> Self {
        let mut sessions = BTreeMap::new();
        sessions.insert(1, Channel::Left);
        for s in 2..=5 {
            sessions.insert(s, Channel::Right);
        }
        Self {
            default: Channel::Right,
            sessions,
        }
    }

    pub fn channel_for(&self, session: Option<u32>) -> Channel {
        session
            .and_then(|s| self.sessions.get(&s).copied())
            .unwrap_or(self.default)
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SampleFormat {
    Int,
    Float,
}

/// Parse a little-endian RIFF/WAVE byte buffer.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::CorruptHeader("missing RIFF/WAVE signature".into()));
    }
    let mut fmt: Option<(SampleFormat, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::CorruptHeader("chunk runs past end of file".into()))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::CorruptHeader("fmt chunk too short".into()));
                }
                let mut tag = u16_at(body, 0);
                if tag == 0xFFFE {
                    if body.len() < 26 {
                        return Err(Error::CorruptHeader("extensible fmt chunk too short".into()));
                    }
                    tag = u16_at(body, 24);
                }
                let format = match tag {
                    1 => SampleFormat::Int,
                    3 => SampleFormat::Float,
                    other => {
                        return Err(Error::UnsupportedFormat(format!(
                            "format tag {other:#06x} is not PCM or IEEE float"
                        )))
                    }
                };
                let channels = u16_at(body, 2);
                let rate = u32_at(body, 4);
                let bits = u16_at(body, 14);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_end + (size & 1);
    }
    let (format, n_channels, rate, bits) =
        fmt.ok_or_else(|| Error::CorruptHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::CorruptHeader("no data chunk".into()))?;
    if !(1..=2).contains(&n_channels) {
        return Err(Error::UnsupportedFormat(format!(
            "{n_channels} channels (1 or 2 supported)"
        )));
    }
    if rate == 0 {
        return Err(Error::CorruptHeader("sample rate is zero".into()));
    }
    let supported = match format {
        SampleFormat::Int => matches!(bits, 8 | 16 | 24 | 32),
        SampleFormat::Float => bits == 32,
    };
    if !supported {
        return Err(Error::UnsupportedFormat(format!(
            "{bits}-bit {format:?} samples"
        )));
    }
    let width = bits as usize / 8;
    let frame = width * n_channels as usize;
    let n_frames = data.len() / frame;
    if n_frames == 0 {
        return Err(Error::EmptyAudio);
    }
    let mut channels = vec![Vec::with_capacity(n_frames); n_channels as usize];
    for f in 0..n_frames {
        for (c, out) in channels.iter_mut().enumerate() {
            let at = f * frame + c * width;
            let s = &data[at..at + width];
            let v = match (format, bits) {
                (SampleFormat::Int, 8) => (s[0] as f64 - 128.0) / 128.0,
                (SampleFormat::Int, 16) => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
                (SampleFormat::Int, 24) => {
                    let raw = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    raw as f64 / 8_388_608.0
                }
                (SampleFormat::Int, 32) => {
                    i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64 / 2_147_483_648.0
                }
                (SampleFormat::Float, 32) => {
                    let v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64;
                    if !v.is_finite() {
                        return Err(Error::CorruptHeader("non-finite float sample".into()));
                    }
                    v.clamp(-1.0, 1.0)
                }
                _ => unreachable!(),
            };
            out.push(v);
        }
    }
    AudioClip::new(channels, rate)
}

/// Encode a clip as 16-bit PCM. Samples are scaled by 32768 and clamped.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let n_ch = clip.n_channels() as u16;
    let n = clip.n_samples();
    let data_len = (n * n_ch as usize * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&n_ch.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * n_ch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(n_ch * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..n {
        for c in &clip.channels {
            let v = (c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_wav_pcm16(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(clip)).map_err(|e| Error::io(path, e))
}
