//! Text matrices, PGM heatmaps and minimal SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major text, one row per line, 17 significant digits.
pub fn matrix_to_text<T: Scalar>(m: &DMatrix<T>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

pub fn write_matrix<T: Scalar>(m: &DMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, matrix_to_text(m))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    parse_matrix_text(&fs::read_to_string(path)?).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: Some(path.to_path_buf()), line, msg },
        other => other,
    })
}

/// Parses whitespace- or comma-separated rows. Blank lines and `#` comments
/// are skipped; all rows must have the same length.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("");
        let cells: Vec<&str> = l.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if cells.is_empty() {
            continue;
        }
        let row = cells
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { path: None, line: i + 1, msg: format!("bad number {t:?}") }))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: None,
                    line: i + 1,
                    msg: format!("row has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Gray level for a nonnegative weight: 0 (black) at `max`, 255 (white) at 0.
pub fn gray_level(w: f64, max: f64) -> u8 {
    if max <= 0.0 {
        return 255;
    }
    255 - (255.0 * (w / max).clamp(0.0, 1.0)).round() as u8
}

/// Binary (P5) grayscale heatmap; darker pixels are larger weights.
/// Negative entries are drawn by magnitude.
pub fn pgm_bytes<T: Scalar>(m: &DMatrix<T>) -> Vec<u8> {
    let max = m.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).into_bytes();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(gray_level(m[(r, c)].as_f64().abs(), max));
        }
    }
    out
}

pub fn write_pgm<T: Scalar>(m: &DMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, pgm_bytes(m))?;
    Ok(())
}

/// Decodes a P5 image into gray levels (row-major).
pub fn parse_pgm(bytes: &[u8]) -> Result<DMatrix<u8>> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Format("expected an 8-bit P5 image".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM size {s:?}")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| Error::Format("truncated PGM data".into()))?;
    Ok(DMatrix::from_row_slice(h, w, data))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG heatmap with the same gray mapping as [`pgm_bytes`].
pub fn svg_heatmap<T: Scalar>(m: &DMatrix<T>, title: &str) -> String {
    let cell = (480.0 / m.nrows().max(m.ncols()).max(1) as f64).max(1.0);
    let (w, h) = (cell * m.ncols() as f64, cell * m.nrows() as f64);
    let max = m.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#, w + 20.0, h + 40.0).unwrap();
    writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{}</text>"#, esc(title)).unwrap();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let g = gray_level(m[(r, c)].as_f64().abs(), max);
            writeln!(
                s,
                r#"<rect x="{:.3}" y="{:.3}" width="{cell:.3}" height="{cell:.3}" fill="rgb({g},{g},{g})"/>"#,
                10.0 + c as f64 * cell,
                30.0 + r as f64 * cell
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn bounds(series: &[Series<'_>]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

fn plot(series: &[Series<'_>], title: &str, xlabel: &str, ylabel: &str, lines: bool) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<text x="{pad}" y="24" font-size="14">{}</text>"#, esc(title)).unwrap();
    writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, esc(xlabel)).unwrap();
    writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, esc(ylabel)).unwrap();
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{v:.4}</text>"#, h - pad + 16.0).unwrap();
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        writeln!(s, r#"<text x="{}" y="{y:.2}" text-anchor="end">{v:.4}</text>"#, pad - 4.0).unwrap();
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = ser.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if lines {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" ")).unwrap();
        } else {
            for &(x, y) in &pts {
                writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#, sx(x), sy(y)).unwrap();
            }
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad - 150.0,
            pad + 16.0 * (i + 1) as f64,
            esc(ser.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn svg_line_plot(series: &[Series<'_>], title: &str, xlabel: &str, ylabel: &str) -> String {
    plot(series, title, xlabel, ylabel, true)
}

pub fn svg_scatter(series: &[Series<'_>], title: &str, xlabel: &str, ylabel: &str) -> String {
    plot(series, title, xlabel, ylabel, false)
}
