use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
}

/// Speaker-labelled speech intervals, sorted by start time.
///
/// Intervals of one speaker never overlap; intervals of different speakers
/// may, and that overlap is what defines the overlap condition.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpeechIntervals {
    entries: Vec<SpeechInterval>,
}

impl SpeechIntervals {
    /// Sort and validate. Line numbers in errors are 1-based input positions.
    pub fn new(entries: Vec<SpeechInterval>) -> Result<Self> {
        let lines: Vec<usize> = (1..=entries.len()).collect();
        Self::from_numbered(entries.into_iter().zip(lines).collect())
    }

    fn from_numbered(mut entries: Vec<(SpeechInterval, usize)>) -> Result<Self> {
        for (e, line) in &entries {
            if !(e.start_s.is_finite() && e.end_s.is_finite()) || e.end_s <= e.start_s {
                return Err(Error::InvertedInterval {
                    line: *line,
                    start: e.start_s,
                    end: e.end_s,
                });
            }
        }
        entries.sort_by(|a, b| a.0.start_s.total_cmp(&b.0.start_s));
        for (i, (e, line)) in entries.iter().enumerate() {
            // Half-open intervals: touching turns of one speaker are fine.
            let clash = entries[..i]
                .iter()
                .any(|(p, _)| p.speaker == e.speaker && p.end_s > e.start_s);
            if clash {
                return Err(Error::SameSpeakerOverlap {
                    line: *line,
                    speaker: e.speaker.clone(),
                });
            }
        }
        Ok(Self {
            entries: entries.into_iter().map(|(e, _)| e).collect(),
        })
    }

    pub fn entries(&self) -> &[SpeechInterval] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.entries.clone()).map(|_| ())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::malformed(
                    line,
                    format!("expected `start end speaker`, found {} fields", fields.len()),
                ));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::malformed(line, format!("not a time: {s:?}")))
            };
            entries.push((
                SpeechInterval {
                    start_s: num(fields[0])?,
                    end_s: num(fields[1])?,
                    speaker: fields[2].to_string(),
                },
                line,
            ));
        }
        Self::from_numbered(entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# start_s end_s speaker\n");
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {}", e.start_s, e.end_s, e.speaker);
        }
        out
    }
}

pub fn load_transcript_intervals(path: impl AsRef<Path>) -> Result<SpeechIntervals> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SpeechIntervals::parse(&text)
}

pub fn write_intervals(intervals: &SpeechIntervals, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, intervals.to_text()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let iv = SpeechIntervals::parse("0.0 2.0 F\n").unwrap();
        assert_eq!(iv.len(), 1);
        assert_eq!(iv.entries()[0].speaker, "F");
    }

    #[test]
    fn cross_speaker_overlap_is_kept_and_sorted() {
        let iv = SpeechIntervals::parse("# turns\n1 3 M\n0 2 F  # first\n").unwrap();
        assert_eq!(iv.entries()[0].speaker, "F");
        assert_eq!(iv.entries()[1].start_s, 1.0);
        assert!(iv.validate().is_ok());
        assert_eq!(SpeechIntervals::parse(&iv.to_text()).unwrap(), iv);
    }

    #[test]
    fn rejects_inverted_and_same_speaker_overlap() {
        assert!(matches!(
            SpeechIntervals::parse("2 1 F"),
            Err(Error::InvertedInterval { line: 1, .. })
        ));
        assert!(matches!(
            SpeechIntervals::parse("0 2 F\n1 3 F\n"),
            Err(Error::SameSpeakerOverlap { line: 2, .. })
        ));
        assert!(SpeechIntervals::parse("0 2 F\n2 3 F\n").is_ok());
        assert!(matches!(
            SpeechIntervals::parse("0 2\n"),
            Err(Error::MalformedRow { .. })
        ));
    }
}
