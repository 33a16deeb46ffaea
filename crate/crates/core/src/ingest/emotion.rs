//! Adapter for frame-level emotion estimates produced by external models.
//!
//! Timestamps are stored exactly as declared in the file. Whether a model
//! stamps its windows at the start or the center is not known here.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{is_dropout, parse_number, push_value, FeatureTrack, FrameGrid, RateCsv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionCategory {
    Happy,
    Sad,
    Angry,
    Neutral,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 4] = [
        EmotionCategory::Happy,
        EmotionCategory::Sad,
        EmotionCategory::Angry,
        EmotionCategory::Neutral,
    ];

    pub fn code(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_code(code: f64) -> Option<Self> {
        if code.fract() != 0.0 || !(0.0..4.0).contains(&code) {
            return None;
        }
        Some(Self::ALL[code as usize])
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionCategory::Happy => "Happy",
            EmotionCategory::Sad => "Sad",
            EmotionCategory::Angry => "Angry",
            EmotionCategory::Neutral => "Neutral",
        }
    }
}

impl FromStr for EmotionCategory {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "happy" | "hap" => Ok(Self::Happy),
            "sad" => Ok(Self::Sad),
            "angry" | "ang" => Ok(Self::Angry),
            "neutral" | "neu" => Ok(Self::Neutral),
            _ => Err(()),
        }
    }
}

pub const EMOTION_COLUMNS: [&str; 4] = ["arousal", "valence", "category", "confidence"];

/// Arousal/valence in `[-1, 1]`, a category code (see [`EmotionCategory::code`])
/// and a model confidence, all on one frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionTrack {
    track: FeatureTrack,
}

impl EmotionTrack {
    pub fn new(
        grid: FrameGrid,
        arousal: Vec<f64>,
        valence: Vec<f64>,
        category: Vec<EmotionCategory>,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        for (i, (&a, &v)) in arousal.iter().zip(&valence).enumerate() {
            for (name, x) in [("arousal", a), ("valence", v)] {
                if !is_dropout(x) && x.abs() > 1.0 {
                    return Err(Error::ValueOutOfRange {
                        line: i + 1,
                        column: name.into(),
                        value: x,
                    });
                }
            }
        }
        let codes = category.iter().map(|c| c.code()).collect();
        let track = FeatureTrack::new(
            grid,
            EMOTION_COLUMNS.iter().map(|s| s.to_string()).collect(),
            vec![arousal, valence, codes, confidence],
        )?;
        Ok(Self { track })
    }

    pub fn track(&self) -> &FeatureTrack {
        &self.track
    }

    pub fn grid(&self) -> &FrameGrid {
        self.track.grid()
    }

    pub fn arousal(&self) -> &[f64] {
        self.track.column_at(0)
    }

    pub fn valence(&self) -> &[f64] {
        self.track.column_at(1)
    }

    pub fn categories(&self) -> Vec<EmotionCategory> {
        self.track
            .column_at(2)
            .iter()
            .map(|&c| EmotionCategory::from_code(c).unwrap_or(EmotionCategory::Neutral))
            .collect()
    }

    pub fn confidence(&self) -> &[f64] {
        self.track.column_at(3)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rate_hz={}", self.grid().rate_hz);
        out.push_str("time_s,arousal,valence,category,confidence\n");
        let cats = self.categories();
        for i in 0..self.track.n_frames() {
            let _ = write!(out, "{}", self.grid().timestamp(i));
            for col in [self.arousal(), self.valence()] {
                out.push(',');
                push_value(&mut out, col[i]);
            }
            let _ = write!(out, ",{},", cats[i].name());
            push_value(&mut out, self.confidence()[i]);
            out.push('\n');
        }
        out
    }
}

pub fn parse_emotion_frames(text: &str) -> Result<EmotionTrack> {
    emotion_from_table(&RateCsv::parse(text.as_bytes())?)
}

pub fn load_emotion_frames(path: impl AsRef<Path>) -> Result<EmotionTrack> {
    emotion_from_table(&RateCsv::read(path.as_ref())?)
}

fn emotion_from_table(table: &RateCsv) -> Result<EmotionTrack> {
    let expected = ["time_s", "arousal", "valence", "category", "confidence"];
    if table.header != expected {
        return Err(Error::malformed(
            2,
            format!("emotion header must be {}", expected.join(",")),
        ));
    }
    let grid = table.grid()?;
    let n = table.rows.len();
    let (mut arousal, mut valence, mut cats, mut conf) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for row in &table.rows {
        let a = parse_number(&row.cells[0], row.line)?;
        let v = parse_number(&row.cells[1], row.line)?;
        for (name, x) in [("arousal", a), ("valence", v)] {
            if !is_dropout(x) && x.abs() > 1.0 {
                return Err(Error::ValueOutOfRange {
                    line: row.line,
                    column: name.into(),
                    value: x,
                });
            }
        }
        let cat: EmotionCategory = row.cells[2].parse().map_err(|_| Error::UnknownCategory {
            line: row.line,
            value: row.cells[2].clone(),
        })?;
        arousal.push(a);
        valence.push(v);
        cats.push(cat);
        conf.push(parse_number(&row.cells[3], row.line)?);
    }
    EmotionTrack::new(grid, arousal, valence, cats, conf)
}

pub fn write_emotion_frames(track: &EmotionTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, track.to_csv_string()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "# rate_hz=10\ntime_s,arousal,valence,category,confidence\n";

    #[test]
    fn passthrough_row() {
        let t = parse_emotion_frames(&format!("{HEAD}0.0,0.5,-0.2,Happy,0.9\n")).unwrap();
        assert_eq!(t.arousal(), &[0.5]);
        assert_eq!(t.valence(), &[-0.2]);
        assert_eq!(t.categories(), vec![EmotionCategory::Happy]);
        assert_eq!(t.confidence(), &[0.9]);
    }

    #[test]
    fn bounds_and_categories_are_checked() {
        assert!(matches!(
            parse_emotion_frames(&format!("{HEAD}0.0,1.3,0,Happy,1\n")),
            Err(Error::ValueOutOfRange { line: 3, .. })
        ));
        assert!(matches!(
            parse_emotion_frames(&format!("{HEAD}0.0,0,0,Excited,1\n")),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn ten_rows_at_ten_hertz_span_one_second() {
        let mut text = HEAD.to_string();
        for i in 0..10 {
            text.push_str(&format!("{},0.1,0.1,Sad,1\n", i as f64 / 10.0));
        }
        let t = parse_emotion_frames(&text).unwrap();
        assert_eq!(t.grid().n_frames as f64 / t.grid().rate_hz, 1.0);
        let again = parse_emotion_frames(&t.to_csv_string()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn category_codes_round_trip() {
        for c in EmotionCategory::ALL {
            assert_eq!(EmotionCategory::from_code(c.code()), Some(c));
            assert_eq!(c.name().parse::<EmotionCategory>(), Ok(c));
        }
        assert_eq!(EmotionCategory::from_code(0.5), None);
    }
}
