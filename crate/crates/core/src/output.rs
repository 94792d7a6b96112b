//! Artifact writers: CSV with header rows, JSON summaries and SVG plots.
//!
//! Every float is printed with 17 significant digits so that values survive a
//! round trip through text bit for bit.

use crate::error::{Error, Result};
use crate::sampler::{corner_distance, HeightField, NEWTON_CORNERS};
use serde::{Serialize, Serializer};
use std::fmt::Write as _;
use std::path::Path;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// JSON number printed by [`fmt_f64`]; non-finite values are a serialization error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite number {}", self.0)));
        }
        let raw = serde_json::value::RawValue::from_string(fmt_f64(self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("summary: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// CSV text from a header and rows of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n", width: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    /// Row of floats.
    pub fn floats(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.row(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const SIZE: f64 = 640.0;
const PAD: f64 = 48.0;

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

/// Polylines in data coordinates with a shared, aspect-preserving frame.
pub fn svg_polylines(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = curves.iter().flat_map(|c| c.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0 < x1) {
        (x0, x1) = (x0.min(0.0) - 1.0, x1.max(0.0) + 1.0);
    }
    if !(y0 < y1) {
        (y0, y1) = (y0.min(0.0) - 1.0, y1.max(0.0) + 1.0);
    }
    let scale = (SIZE - 2.0 * PAD) / (x1 - x0).max(y1 - y0);
    let map = |x: f64, y: f64| (PAD + (x - x0) * scale, SIZE - PAD - (y - y0) * scale);
    let mut out = String::new();
    svg_open(&mut out, SIZE, SIZE);
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let (bx0, by0) = map(x0, y0);
    let (bx1, by1) = map(x1, y1);
    let _ = writeln!(
        out,
        r##"<rect x="{bx0:.2}" y="{by1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        bx1 - bx0,
        by0 - by1
    );
    let _ = writeln!(out, r#"<text x="{bx0:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{x0:.3}, {y0:.3}</text>"#, by0 + 14.0);
    let _ = writeln!(out, r#"<text x="{bx1:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{x1:.3}, {y1:.3}</text>"#, by1 - 4.0);
    for (k, (label, c)) in curves.iter().enumerate() {
        let mut d = String::new();
        let mut pen_up = true;
        for &(x, y) in c {
            if !(x.is_finite() && y.is_finite()) {
                pen_up = true;
                continue;
            }
            let (px, py) = map(x, y);
            let _ = write!(d, "{}{px:.2},{py:.2} ", if pen_up { "M" } else { "L" });
            pen_up = false;
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"><title>{label}</title></path>"#,
            d.trim_end(),
            PALETTE[k % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One square per cell; `color` returns an RGB triple or `None` for a blank cell.
pub fn svg_grid(title: &str, rows: usize, cols: usize, color: &dyn Fn(usize, usize) -> Option<[u8; 3]>) -> String {
    let cell = ((SIZE - 2.0 * PAD) / rows.max(cols).max(1) as f64).max(1.0);
    let (w, h) = (2.0 * PAD + cell * cols as f64, 2.0 * PAD + cell * rows as f64);
    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    for r in 0..rows {
        for c in 0..cols {
            if let Some([red, green, blue]) = color(r, c) {
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="rgb({red},{green},{blue})"/>"#,
                    PAD + c as f64 * cell,
                    PAD + r as f64 * cell,
                    cell + 0.05,
                    cell + 0.05
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Blue to red through white for `t` in `[0, 1]`.
pub fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, s: f64| (a + (b - a) * s).round() as u8;
    if t < 0.5 {
        let s = t * 2.0;
        [lerp(49.0, 255.0, s), lerp(54.0, 255.0, s), lerp(149.0, 255.0, s)]
    } else {
        let s = (t - 0.5) * 2.0;
        [lerp(255.0, 165.0, s), lerp(255.0, 0.0, s), lerp(255.0, 38.0, s)]
    }
}

const CORNER_COLORS: [[f64; 3]; 4] = [[215.0, 48.0, 39.0], [26.0, 152.0, 80.0], [69.0, 117.0, 180.0], [254.0, 224.0, 60.0]];

/// Colour of a local slope: one colour per Newton polygon corner, grey in the centre.
pub fn slope_color(a: f64, b: f64) -> Option<[u8; 3]> {
    if !(a.is_finite() && b.is_finite()) {
        return None;
    }
    let mut rgb = [0.0; 3];
    let mut total = 0.0;
    for (k, &(ca, cb)) in NEWTON_CORNERS.iter().enumerate() {
        let t = (1.0 - 2.0 * ((a - ca).abs() + (b - cb).abs())).max(0.0);
        total += t;
        for i in 0..3 {
            rgb[i] += t * CORNER_COLORS[k][i];
        }
    }
    let rest = (1.0 - total).max(0.0);
    let scale = 1.0 / (total + rest);
    Some(rgb.map(|v| ((v + rest * 170.0) * scale).round().clamp(0.0, 255.0) as u8))
}

/// Mean height map coloured by local slope, frozen faces in their corner colour.
pub fn svg_height(title: &str, h: &HeightField, k: usize) -> String {
    svg_grid(title, h.rows, h.cols, &|r, c| {
        if h.get(r, c).is_nan() {
            return None;
        }
        let (a, b) = h.slope(r, c, k);
        if corner_distance(a, b) < 1e-9 {
            let i = NEWTON_CORNERS.iter().position(|&(ca, cb)| (a - ca).abs() + (b - cb).abs() < 1e-6)?;
            return Some(CORNER_COLORS[i].map(|v| v as u8));
        }
        slope_color(a, b)
    })
}
