//! Uniform frame grids and the column-oriented feature track shared by every
//! pipeline stage.
//!
//! Dropouts are stored as `NaN`. Infinite values are rejected on construction.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing grid rates and timestamps.
const GRID_EPS: f64 = 1e-9;

/// Not-a-value marker for missing samples.
pub const DROPOUT: f64 = f64::NAN;

#[inline]
pub fn is_dropout(v: f64) -> bool {
    v.is_nan()
}

/// Uniform timestamp lattice: `timestamp(i) = start_s + i / rate_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub rate_hz: f64,
    pub start_s: f64,
    pub n_frames: usize,
}

impl FrameGrid {
    pub fn new(rate_hz: f64, start_s: f64, n_frames: usize) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame rate must be positive, got {rate_hz}"
            )));
        }
        if !start_s.is_finite() {
            return Err(Error::InvalidParameter("grid start must be finite".into()));
        }
        Ok(Self {
            rate_hz,
            start_s,
            n_frames,
        })
    }

    /// Grid covering `[start_s, end_s]` with every timestamp inside the span.
    pub fn spanning(rate_hz: f64, start_s: f64, end_s: f64) -> Result<Self> {
        if end_s < start_s {
            return Err(Error::InvalidParameter(format!(
                "span end {end_s} precedes start {start_s}"
            )));
        }
        let n = ((end_s - start_s) * rate_hz + GRID_EPS).floor() as usize + 1;
        Self::new(rate_hz, start_s, n)
    }

    #[inline]
    pub fn timestamp(&self, i: usize) -> f64 {
        self.start_s + i as f64 / self.rate_hz
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Timestamp of the last frame (equal to `start_s` for an empty grid).
    pub fn last_s(&self) -> f64 {
        self.timestamp(self.n_frames.saturating_sub(1))
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_frames).map(|i| self.timestamp(i))
    }

    /// Same rate, start and length up to floating-point slack.
    pub fn matches(&self, other: &FrameGrid) -> bool {
        self.n_frames == other.n_frames
            && (self.rate_hz - other.rate_hz).abs() <= GRID_EPS * self.rate_hz
            && (self.start_s - other.start_s).abs() <= GRID_EPS * self.period_s()
    }
}

/// A uniformly sampled matrix of named columns. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    grid: FrameGrid,
    columns: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl FeatureTrack {
    pub fn new(grid: FrameGrid, columns: Vec<String>, data: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: data.len(),
            });
        }
        for (i, name) in columns.iter().enumerate() {
            if columns[..i].contains(name) {
                return Err(Error::InvalidParameter(format!("duplicate column {name}")));
            }
        }
        for (name, col) in columns.iter().zip(&data) {
            if col.len() != grid.n_frames {
                return Err(Error::DimensionMismatch {
                    expected: grid.n_frames,
                    found: col.len(),
                });
            }
            if col.iter().any(|v| v.is_infinite()) {
                return Err(Error::InvalidParameter(format!(
                    "column {name} contains an infinite value"
                )));
            }
        }
        Ok(Self {
            grid,
            columns,
            data,
        })
    }

    pub fn empty(grid: FrameGrid) -> Self {
        Self {
            grid,
            columns: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn single(grid: FrameGrid, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![name.into()], vec![values])
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn n_frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.column_index(name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.data[index]
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn into_parts(self) -> (FrameGrid, Vec<String>, Vec<Vec<f64>>) {
        (self.grid, self.columns, self.data)
    }

    pub fn value(&self, frame: usize, column: usize) -> f64 {
        self.data[column][frame]
    }

    pub fn row(&self, frame: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[frame]).collect()
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.column_index(&name).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate column {name}")));
        }
        if values.len() != self.grid.n_frames {
            return Err(Error::DimensionMismatch {
                expected: self.grid.n_frames,
                found: values.len(),
            });
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidParameter(format!(
                "column {name} contains an infinite value"
            )));
        }
        self.columns.push(name);
        self.data.push(values);
        Ok(())
    }

    /// Sub-track with the named columns in the given order.
    pub fn select(&self, names: &[&str]) -> Result<FeatureTrack> {
        let mut data = Vec::with_capacity(names.len());
        for name in names {
            data.push(self.column(name)?.to_vec());
        }
        FeatureTrack::new(
            self.grid,
            names.iter().map(|s| s.to_string()).collect(),
            data,
        )
    }

    /// Column-wise concatenation of tracks that share a grid.
    pub fn concat(parts: &[&FeatureTrack]) -> Result<FeatureTrack> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyTrack);
        };
        let mut out = FeatureTrack::empty(first.grid);
        for part in parts {
            if !part.grid.matches(&first.grid) {
                return Err(Error::GridMismatch(format!(
                    "{:?} vs {:?}",
                    first.grid, part.grid
                )));
            }
            for (name, col) in part.columns.iter().zip(&part.data) {
                out.push_column(name.clone(), col.clone())?;
            }
        }
        Ok(out)
    }

    /// Same values, columns renamed with `prefix`.
    pub fn prefixed(&self, prefix: &str) -> FeatureTrack {
        FeatureTrack {
            grid: self.grid,
            columns: self
                .columns
                .iter()
                .map(|c| format!("{prefix}{c}"))
                .collect(),
            data: self.data.clone(),
        }
    }

    /// Keep frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<FeatureTrack> {
        if start > end || end > self.n_frames() {
            return Err(Error::InvalidParameter(format!(
                "frame range {start}..{end} outside 0..{}",
                self.n_frames()
            )));
        }
        let grid = FrameGrid::new(self.grid.rate_hz, self.grid.timestamp(start), end - start)?;
        FeatureTrack::new(
            grid,
            self.columns.clone(),
            self.data.iter().map(|c| c[start..end].to_vec()).collect(),
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rate_hz={}", self.grid.rate_hz);
        out.push_str("time_s");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for i in 0..self.n_frames() {
            let _ = write!(out, "{}", self.grid.timestamp(i));
            for col in &self.data {
                out.push(',');
                push_value(&mut out, col[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureTrack> {
        let path = path.as_ref();
        let table = RateCsv::read(path)?;
        let grid = table.grid()?;
        let mut data = vec![Vec::with_capacity(table.rows.len()); table.header.len() - 1];
        for row in &table.rows {
            for (j, cell) in row.cells.iter().enumerate() {
                data[j].push(parse_number(cell, row.line)?);
            }
        }
        FeatureTrack::new(grid, table.header[1..].to_vec(), data)
    }
}

pub(crate) fn push_value(out: &mut String, v: f64) {
    if !is_dropout(v) {
        let _ = write!(out, "{v}");
    }
}

pub(crate) fn parse_number(cell: &str, line: usize) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(DROPOUT);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::malformed(line, format!("not a number: {cell:?}")))?;
    if v.is_infinite() {
        return Err(Error::malformed(line, "infinite value"));
    }
    Ok(v)
}

pub(crate) struct CsvRow {
    pub line: usize,
    pub time_s: f64,
    pub cells: Vec<String>,
}

/// Raw contents of a `# rate_hz=` prefixed CSV whose first column is `time_s`.
pub(crate) struct RateCsv {
    pub rate_hz: f64,
    pub header: Vec<String>,
    pub rows: Vec<CsvRow>,
}

impl RateCsv {
    pub fn read(path: &Path) -> Result<RateCsv> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn parse(reader: impl BufRead) -> Result<RateCsv> {
        let mut rate_hz = None;
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<stream>", e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("rate_hz=") {
                    let r: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::malformed(lineno, format!("bad rate {v:?}")))?;
                    if !(r.is_finite() && r > 0.0) {
                        return Err(Error::malformed(lineno, "rate must be positive"));
                    }
                    rate_hz = Some(r);
                }
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            match &header {
                None => {
                    if cells.first().map(String::as_str) != Some("time_s") {
                        return Err(Error::malformed(lineno, "header must start with time_s"));
                    }
                    header = Some(cells);
                }
                Some(h) => {
                    if cells.len() != h.len() {
                        return Err(Error::malformed(
                            lineno,
                            format!("expected {} cells, found {}", h.len(), cells.len()),
                        ));
                    }
                    let time_s = parse_number(&cells[0], lineno)?;
                    if is_dropout(time_s) {
                        return Err(Error::malformed(lineno, "missing time_s"));
                    }
                    rows.push(CsvRow {
                        line: lineno,
                        time_s,
                        cells: cells[1..].to_vec(),
                    });
                }
            }
        }
        let rate_hz = rate_hz.ok_or_else(|| Error::malformed(1, "missing # rate_hz= comment"))?;
        let header = header.ok_or_else(|| Error::malformed(1, "missing header row"))?;
        Ok(RateCsv {
            rate_hz,
            header,
            rows,
        })
    }

    /// Grid implied by the declared rate and first timestamp. Every row must
    /// sit within half a period of its lattice point and time must increase.
    pub fn grid(&self) -> Result<FrameGrid> {
        let start = self.rows.first().map(|r| r.time_s).unwrap_or(0.0);
        let grid = FrameGrid::new(self.rate_hz, start, self.rows.len())?;
        let mut prev = f64::NEG_INFINITY;
        for (i, row) in self.rows.iter().enumerate() {
            if row.time_s <= prev || (row.time_s - grid.timestamp(i)).abs() > 0.5 * grid.period_s()
            {
                return Err(Error::NonMonotoneTime { line: row.line });
            }
            prev = row.time_s;
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_timestamps_follow_rate() {
        let g = FrameGrid::new(60.24, 4.0, 10).unwrap();
        assert_eq!(g.timestamp(0), 4.0);
        assert_eq!(g.timestamp(3), 4.0 + 3.0 / 60.24);
    }

    #[test]
    fn spanning_grid_count() {
        let g = FrameGrid::spanning(60.24, 4.0, 64.0).unwrap();
        assert_eq!(g.n_frames, 3615);
        let g = FrameGrid::spanning(10.0, 0.0, 1.0).unwrap();
        assert_eq!(g.n_frames, 11);
    }

    #[test]
    fn rejects_bad_rate_and_duplicates() {
        assert!(FrameGrid::new(0.0, 0.0, 1).is_err());
        let g = FrameGrid::new(1.0, 0.0, 1).unwrap();
        let r = FeatureTrack::new(g, vec!["a".into(), "a".into()], vec![vec![0.0], vec![0.0]]);
        assert!(r.is_err());
        assert!(FeatureTrack::single(g, "a", vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_dropouts() {
        let g = FrameGrid::new(120.0, 0.5, 3).unwrap();
        let t = FeatureTrack::new(
            g,
            vec!["a".into(), "b".into()],
            vec![vec![0.1, DROPOUT, 3.0], vec![-1e-12, 2.5, 1.0 / 3.0]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        let back = FeatureTrack::read_csv(&p).unwrap();
        assert!(back.grid().matches(t.grid()));
        assert_eq!(back.column("b").unwrap(), t.column("b").unwrap());
        assert!(is_dropout(back.column("a").unwrap()[1]));
        assert_eq!(back.column("a").unwrap()[2], 3.0);
    }

    #[test]
    fn csv_rejects_time_going_backwards() {
        let text = "# rate_hz=10\ntime_s,a\n0.0,1\n0.2,1\n0.1,1\n";
        let t = RateCsv::parse(text.as_bytes()).unwrap();
        assert!(matches!(t.grid(), Err(Error::NonMonotoneTime { line: 4 })));
    }
}
