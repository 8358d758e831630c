use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use crate::env::{CellKind, GridSpec};

/// Per-cell step counts at one point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub step: u64,
    pub width: usize,
    pub height: usize,
    /// Layout symbols, row-major.
    pub symbols: Vec<char>,
    pub counts: Vec<u64>,
}

impl CoverageGrid {
    pub fn new(spec: &GridSpec, step: u64, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), spec.n_cells());
        let mut symbols = Vec::with_capacity(spec.n_cells());
        for y in 0..spec.height {
            for x in 0..spec.width {
                symbols.push(spec.cell(x, y).symbol());
            }
        }
        CoverageGrid { step, width: spec.width, height: spec.height, symbols, counts: counts.to_vec() }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn is_wall(&self, i: usize) -> bool {
        self.symbols[i] == CellKind::Wall.symbol()
    }
}

pub const COVERAGE_HEADER: &str = "step,x,y,cell,count";

/// Appends one row per cell.
pub fn write_coverage_rows<W: Write>(mut w: W, grid: &CoverageGrid) -> io::Result<()> {
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            writeln!(w, "{},{},{},{},{}", grid.step, x, y, grid.symbols[i], grid.counts[i])?;
        }
    }
    Ok(())
}

/// Parses every snapshot in a coverage CSV, in file order.
pub fn read_coverage_csv<R: BufRead>(r: R) -> io::Result<Vec<CoverageGrid>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut grids: Vec<CoverageGrid> = Vec::new();
    let mut cells: Vec<(usize, usize, char, u64)> = Vec::new();
    let mut current: Option<u64> = None;
    let finish = |step: u64, cells: &mut Vec<(usize, usize, char, u64)>| -> io::Result<CoverageGrid> {
        let width = cells.iter().map(|c| c.0).max().map_or(0, |m| m + 1);
        let height = cells.iter().map(|c| c.1).max().map_or(0, |m| m + 1);
        if width * height != cells.len() {
            return Err(bad(format!("snapshot at step {step} is not a full grid")));
        }
        let mut symbols = vec!['#'; width * height];
        let mut counts = vec![0; width * height];
        for &(x, y, s, n) in cells.iter() {
            symbols[y * width + x] = s;
            counts[y * width + x] = n;
        }
        cells.clear();
        Ok(CoverageGrid { step, width, height, symbols, counts })
    };
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != COVERAGE_HEADER {
                return Err(bad(format!("expected header `{COVERAGE_HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (|| {
            if f.len() != 5 {
                return None;
            }
            Some((
                f[0].parse::<u64>().ok()?,
                f[1].parse::<usize>().ok()?,
                f[2].parse::<usize>().ok()?,
                f[3].chars().next()?,
                f[4].parse::<u64>().ok()?,
            ))
        })()
        .ok_or_else(|| bad(format!("line {}: malformed row", i + 1)))?;
        if current.is_some_and(|s| s != parsed.0) {
            grids.push(finish(current.unwrap(), &mut cells)?);
        }
        current = Some(parsed.0);
        cells.push((parsed.1, parsed.2, parsed.3, parsed.4));
    }
    if let Some(step) = current {
        grids.push(finish(step, &mut cells)?);
    }
    Ok(grids)
}

const CELL: usize = 20;
const BACKGROUND: &str = "#f4f4f4";
const WALL: &str = "#2b2b2b";

/// Colour for a visited cell: `t = log10(n) / log10(max)` mapped on a
/// light-yellow to dark-red ramp; `t = 1` when only counts of one exist.
fn heat_colour(n: u64, max: u64) -> String {
    let t = if max <= 1 { 1.0 } else { (n as f64).log10() / (max as f64).log10() };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 128.0), lerp(237.0, 0.0), lerp(160.0, 38.0))
}

pub fn coverage_svg(grid: &CoverageGrid) -> String {
    let max = grid.counts.iter().copied().max().unwrap_or(0);
    let (w, h) = (grid.width * CELL, grid.height * CELL);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}" viewBox="0 0 {w} {}">"#,
        h + 24,
        h + 24
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="{BACKGROUND}"/>"#);
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            let fill = if grid.is_wall(i) {
                WALL.to_string()
            } else if grid.counts[i] == 0 {
                continue;
            } else {
                heat_colour(grid.counts[i], max)
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                x * CELL,
                y * CELL
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{}" font-family="sans-serif" font-size="12">step {} (max {max}, log scale)</text>"#,
        h + 16,
        grid.step
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<stem>.csv` and `<stem>.svg` for one snapshot.
pub fn export_coverage(grid: &CoverageGrid, stem: &Path) -> io::Result<()> {
    let mut csv = Vec::new();
    writeln!(csv, "{COVERAGE_HEADER}")?;
    write_coverage_rows(&mut csv, grid)?;
    fs::write(stem.with_extension("csv"), csv)?;
    fs::write(stem.with_extension("svg"), coverage_svg(grid))
}
