//! Heatmap grids as CSV plus static SVG renderings.
//!
//! Colours run linearly from white at `vmin` to `#08306b` at `vmax`; values
//! outside the range are clamped and empty cells are drawn grey. The scale
//! is written into every SVG.

use std::fmt::Write as _;
use std::path::Path;

use emocouple::coupling::{AffectBin, FeatureSet};
use emocouple::ingest::EmotionCategory;
use emocouple::timeline::Condition;

use crate::config::Config;
use crate::failure::{write_file, Failure};
use crate::pipeline::{read_summary, weighted_means, Layout, CONDITIONS};

pub const LOW_COLOUR: [u8; 3] = [0xff, 0xff, 0xff];
pub const HIGH_COLOUR: [u8; 3] = [0x08, 0x30, 0x6b];
pub const EMPTY_COLOUR: &str = "#cccccc";

/// A labelled matrix; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub title: String,
    pub row_label: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.rows.len() * self.columns.len()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.row_label.clone();
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().flatten().flatten().copied().reduce(f64::max)
    }
}

/// Hex colour of `v` on the linear scale `[vmin, vmax]`.
pub fn colour(v: f64, vmin: f64, vmax: f64) -> String {
    let t = if vmax > vmin { ((v - vmin) / (vmax - vmin)).clamp(0.0, 1.0) } else { 0.0 };
    let ch = |i: usize| (LOW_COLOUR[i] as f64 + t * (HIGH_COLOUR[i] as f64 - LOW_COLOUR[i] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL_W: usize = 84;
const CELL_H: usize = 26;
const LEFT: usize = 120;
const TOP: usize = 70;

/// One `<rect>` per cell and nothing else drawn as a rect.
pub fn to_svg(grid: &Grid, vmin: f64, vmax: f64) -> String {
    let width = LEFT + CELL_W * grid.columns.len() + 20;
    let height = TOP + CELL_H * grid.rows.len() + 40;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        "<desc>colormap=linear low={} high={} vmin={vmin} vmax={vmax} empty={EMPTY_COLOUR}</desc>",
        colour(vmin, vmin, vmax),
        colour(vmax, vmin, vmax)
    );
    let _ = writeln!(out, r#"<text x="{LEFT}" y="18" font-size="13">{}</text>"#, escape(&grid.title));
    for (j, c) in grid.columns.iter().enumerate() {
        let x = LEFT + j * CELL_W + CELL_W / 2;
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP - 8, escape(c));
    }
    for (i, (name, row)) in grid.rows.iter().zip(&grid.values).enumerate() {
        let y = TOP + i * CELL_H;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            y + CELL_H / 2 + 4,
            escape(name)
        );
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + j * CELL_W;
            let (fill, value) = match v {
                Some(v) => (colour(*v, vmin, vmax), v.to_string()),
                None => (EMPTY_COLOUR.to_string(), String::new()),
            };
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff" data-row="{}" data-column="{}" data-value="{value}"/>"##,
                escape(name),
                escape(&grid.columns[j])
            );
        }
    }
    let _ = writeln!(
        out,
        r##"<text x="{LEFT}" y="{}">scale: {vmin} (white) to {vmax} (#08306b), linear; grey = no data</text>"##,
        height - 14
    );
    out.push_str("</svg>\n");
    out
}

/// Region x (emotion, condition) means pooled over sessions by frame count.
pub fn activeness_grid(summary: &Path) -> Result<Grid, Failure> {
    let rows = read_summary(summary)?;
    let means = weighted_means(&rows, |r| (r.region.clone(), r.emotion.clone(), r.condition.clone()));
    let mut regions: Vec<String> = Vec::new();
    for r in &rows {
        if !regions.contains(&r.region) {
            regions.push(r.region.clone());
        }
    }
    let mut columns = Vec::new();
    let mut keys = Vec::new();
    for e in EmotionCategory::ALL {
        for c in CONDITIONS {
            columns.push(format!("{}_{}", e.name(), c.name()));
            keys.push((e.name().to_string(), c.name().to_string()));
        }
    }
    let values = regions
        .iter()
        .map(|region| {
            keys.iter()
                .map(|(e, c)| means.get(&(region.clone(), e.clone(), c.clone())).map(|v| v.0))
                .collect()
        })
        .collect();
    Ok(Grid {
        title: "mean activeness by emotion and speech condition".into(),
        row_label: "region".into(),
        rows: regions,
        columns,
        values,
    })
}

/// Parsed coupling report rows: (region, set, condition, dimension, bin, mean r).
fn read_coupling(path: &Path) -> Result<Vec<[String; 6]>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Failure::validation(format!("{}:{}: expected 10 fields", path.display(), i + 1)));
        }
        out.push([f[0], f[1], f[2], f[3], f[4], f[6]].map(String::from));
    }
    Ok(out)
}

fn lookup(rows: &[[String; 6]], key: [&str; 5]) -> Option<f64> {
    rows.iter()
        .find(|r| (0..5).all(|i| r[i] == key[i]))
        .and_then(|r| r[5].parse().ok())
}

fn regions_of(rows: &[[String; 6]]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r[0]) {
            out.push(r[0].clone());
        }
    }
    out
}

/// Region x feature-set mean r for one speech condition, unbinned.
pub fn coupling_grid(rows: &[[String; 6]], sets: &[FeatureSet], condition: Condition) -> Grid {
    let regions = regions_of(rows);
    let values = regions
        .iter()
        .map(|region| {
            sets.iter()
                .map(|s| lookup(rows, [region, s.name(), condition.name(), "none", "all"]))
                .collect()
        })
        .collect();
    Grid {
        title: format!("mean r, {} frames", condition.name()),
        row_label: "region".into(),
        rows: regions,
        columns: sets.iter().map(|s| s.name().to_string()).collect(),
        values,
    }
}

/// Region x affective bin mean r for one feature set over all speaking frames.
pub fn affect_grid(rows: &[[String; 6]], set: FeatureSet) -> Grid {
    let bins: Vec<(&str, &str)> = ["arousal", "valence"]
        .into_iter()
        .flat_map(|d| [AffectBin::High, AffectBin::Low].map(|b| (d, b.name())))
        .collect();
    let regions = regions_of(rows);
    let values = regions
        .iter()
        .map(|region| {
            bins.iter()
                .map(|(d, b)| lookup(rows, [region, set.name(), "all", d, b]))
                .collect()
        })
        .collect();
    Grid {
        title: format!("mean r of {} features by affective bin", set.name()),
        row_label: "region".into(),
        rows: regions,
        columns: bins.iter().map(|(d, b)| format!("{d}_{b}")).collect(),
        values,
    }
}

fn emit(dir: &Path, stem: &str, grid: &Grid, vmin: f64, vmax: f64) -> Result<(), Failure> {
    write_file(&dir.join(format!("{stem}.csv")), grid.to_csv_string())?;
    write_file(&dir.join(format!("{stem}.svg")), to_svg(grid, vmin, vmax))
}

pub fn report(config: &Config, layout: &Layout) -> Result<(), Failure> {
    let summary = layout.activeness_summary();
    let coupling = layout.coupling_report();
    for (p, stage) in [(&summary, "activeness"), (&coupling, "map")] {
        if !p.is_file() {
            return Err(Failure::missing_upstream(p, stage));
        }
    }
    let dir = layout.report_dir();
    let act = activeness_grid(&summary)?;
    // Activeness has no natural ceiling; the top of the scale is the grid
    // maximum and is recorded in the SVG.
    emit(&dir, "activeness_grid", &act, 0.0, act.max().unwrap_or(1.0).max(0.0))?;

    let rows = read_coupling(&coupling)?;
    let sets = config.coupling.feature_sets()?;
    for condition in [Condition::All, Condition::NonOverlap, Condition::Overlap] {
        let g = coupling_grid(&rows, &sets, condition);
        emit(&dir, &format!("coupling_grid_{}", condition.name()), &g, 0.0, 1.0)?;
    }
    for &set in &sets {
        emit(&dir, &format!("coupling_affect_grid_{}", set.name()), &affect_grid(&rows, set), 0.0, 1.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_endpoints_and_midpoint() {
        assert_eq!(colour(0.0, 0.0, 1.0), "#ffffff");
        assert_eq!(colour(1.0, 0.0, 1.0), "#08306b");
        assert_eq!(colour(2.0, 0.0, 1.0), "#08306b");
        // Midpoint of each channel, rounded half away from zero.
        assert_eq!(colour(0.5, 0.0, 1.0), "#8498b5");
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let g = Grid {
            title: "t".into(),
            row_label: "region".into(),
            rows: vec!["a".into(), "b".into()],
            columns: vec!["x".into(), "y".into(), "z".into()],
            values: vec![vec![Some(0.1), None, Some(0.9)], vec![Some(0.5), Some(0.0), Some(1.0)]],
        };
        let svg = to_svg(&g, 0.0, 1.0);
        assert_eq!(svg.matches("<rect").count(), 6);
        assert!(svg.contains("vmin=0 vmax=1"));
        assert!(svg.contains(EMPTY_COLOUR));
        assert_eq!(g.to_csv_string(), "region,x,y,z\na,0.1,,0.9\nb,0.5,0,1\n");
    }
}
