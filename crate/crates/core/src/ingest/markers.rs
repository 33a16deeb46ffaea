//! Marker trajectory CSV: `# rate_hz=` comment, then
//! `time_s,<M>_x,<M>_y,<M>_z,...`. An empty cell marks the whole marker as
//! dropped out on that frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::MarkerTrack;
use crate::track::{is_dropout, parse_number, push_value, RateCsv, DROPOUT};

/// Default plausibility bound on marker coordinates, in millimeters.
pub const DEFAULT_COORD_BOUND_MM: f64 = 2000.0;

pub fn load_markers(path: impl AsRef<Path>) -> Result<MarkerTrack> {
    load_markers_with_bound(path, DEFAULT_COORD_BOUND_MM)
}

pub fn load_markers_with_bound(path: impl AsRef<Path>, bound_mm: f64) -> Result<MarkerTrack> {
    let table = RateCsv::read(path.as_ref())?;
    markers_from_table(&table, bound_mm)
}

pub fn parse_markers(text: &str) -> Result<MarkerTrack> {
    markers_from_table(&RateCsv::parse(text.as_bytes())?, DEFAULT_COORD_BOUND_MM)
}

fn marker_names(header: &[String]) -> Result<Vec<String>> {
    let coords = &header[1..];
    if coords.is_empty() || coords.len() % 3 != 0 {
        return Err(Error::InconsistentMarkerSet(format!(
            "{} coordinate columns is not a multiple of 3",
            coords.len()
        )));
    }
    let mut names: Vec<String> = Vec::with_capacity(coords.len() / 3);
    for triple in coords.chunks(3) {
        let name = triple[0].strip_suffix("_x").ok_or_else(|| {
            Error::InconsistentMarkerSet(format!("expected <marker>_x, found {}", triple[0]))
        })?;
        for (col, axis) in triple[1..].iter().zip(["_y", "_z"]) {
            if col.strip_suffix(axis) != Some(name) {
                return Err(Error::InconsistentMarkerSet(format!(
                    "expected {name}{axis}, found {col}"
                )));
            }
        }
        if names.iter().any(|n| n == name) {
            return Err(Error::InconsistentMarkerSet(format!("duplicate marker {name}")));
        }
        names.push(name.to_string());
    }
    Ok(names)
}

fn markers_from_table(table: &RateCsv, bound_mm: f64) -> Result<MarkerTrack> {
    let names = marker_names(&table.header)?;
    let grid = table.grid()?;
    let n_markers = names.len();
    let mut positions = Vec::with_capacity(table.rows.len() * n_markers);
    for row in &table.rows {
        for m in 0..n_markers {
            let mut p = [0.0; 3];
            let mut dropped = false;
            for (axis, slot) in p.iter_mut().enumerate() {
                let v = parse_number(&row.cells[3 * m + axis], row.line)?;
                if is_dropout(v) {
                    dropped = true;
                } else if v.abs() > bound_mm {
                    return Err(Error::malformed(
                        row.line,
                        format!("{} coordinate {v} exceeds {bound_mm} mm", names[m]),
                    ));
                }
                *slot = v;
            }
            positions.push(if dropped { [DROPOUT; 3] } else { p });
        }
    }
    MarkerTrack::new(grid, names, positions)
}

pub fn markers_to_csv_string(track: &MarkerTrack) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# rate_hz={}", track.grid().rate_hz);
    out.push_str("time_s");
    for m in track.markers() {
        let _ = write!(out, ",{m}_x,{m}_y,{m}_z");
    }
    out.push('\n');
    for f in 0..track.n_frames() {
        let _ = write!(out, "{}", track.grid().timestamp(f));
        for m in 0..track.n_markers() {
            for v in track.position(f, m) {
                out.push(',');
                push_value(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_markers(track: &MarkerTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, markers_to_csv_string(track)).map_err(|e| Error::io(path, e))
}
