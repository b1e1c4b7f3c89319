//! Experiment outputs and their CSV, JSON and SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub version: String,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Metadata {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }
}

/// A labelled matrix; `marked` cells are the optima the command highlights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub row_label: String,
    pub col_label: String,
    pub row_headers: Vec<String>,
    pub col_headers: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub marked: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub metadata: Metadata,
    pub matrices: Vec<NamedMatrix>,
    pub notes: Vec<String>,
    /// Command-specific detail (trajectories, check results, ...).
    pub detail: Option<serde_json::Value>,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metadata_line(m: &Metadata) -> String {
    let mut line = format!("# {} v{}", m.command, m.version);
    for (k, v) in &m.parameters {
        let _ = write!(line, " {k}={v}");
    }
    if let Some(seed) = m.seed {
        let _ = write!(line, " seed={seed}");
    }
    line
}

fn marked_label(m: &NamedMatrix) -> String {
    m.marked
        .iter()
        .map(|&(r, c)| format!("({},{})", m.row_headers[r], m.col_headers[c]))
        .collect::<Vec<_>>()
        .join(" ")
}

impl ExperimentOutput {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::State(format!("JSON encoding failed: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&metadata_line(&self.metadata));
        out.push('\n');
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        for (i, m) in self.matrices.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# {}", m.name);
            if !m.marked.is_empty() {
                let _ = writeln!(out, "# marked: {}", marked_label(m));
            }
            let corner = format!("{}\\{}", m.row_label, m.col_label);
            let header: Vec<String> = std::iter::once(csv_field(&corner))
                .chain(m.col_headers.iter().map(|h| csv_field(h)))
                .collect();
            out.push_str(&header.join(","));
            out.push('\n');
            for (r, row) in m.values.iter().enumerate() {
                let cells: Vec<String> = std::iter::once(csv_field(&m.row_headers[r]))
                    .chain(row.iter().map(|v| num(*v)))
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 56.0;
        const MARGIN: f64 = 70.0;
        const GAP: f64 = 40.0;
        let mut body = String::new();
        let mut x0 = MARGIN;
        let mut height: f64 = 0.0;
        for m in &self.matrices {
            let rows = m.values.len();
            let cols = m.values.first().map_or(0, Vec::len);
            let finite: Vec<f64> = m.values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
            let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                body,
                r#"<g class="heatmap" data-name="{}"><text x="{x0}" y="24" font-size="14">{}</text>"#,
                xml(&m.name),
                xml(&m.name)
            );
            let _ = writeln!(
                body,
                r#"<text x="{}" y="44" font-size="11">{}</text><text x="{}" y="{}" font-size="11" transform="rotate(-90 {} {})">{}</text>"#,
                x0,
                xml(&m.col_label),
                x0 - 50.0,
                MARGIN + rows as f64 * CELL / 2.0,
                x0 - 50.0,
                MARGIN + rows as f64 * CELL / 2.0,
                xml(&m.row_label)
            );
            for (c, h) in m.col_headers.iter().enumerate() {
                let _ = writeln!(
                    body,
                    r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
                    x0 + (c as f64 + 0.5) * CELL,
                    MARGIN - 6.0,
                    xml(h)
                );
            }
            for (r, row) in m.values.iter().enumerate() {
                let y = MARGIN + r as f64 * CELL;
                let _ = writeln!(
                    body,
                    r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#,
                    x0 - 6.0,
                    y + CELL / 2.0 + 4.0,
                    xml(&m.row_headers[r])
                );
                for (c, &v) in row.iter().enumerate() {
                    let x = x0 + c as f64 * CELL;
                    let fill = colour(v, lo, hi);
                    let marked = m.marked.contains(&(r, c));
                    let stroke = if marked {
                        r##" stroke="#d62728" stroke-width="3""##
                    } else {
                        r##" stroke="#ffffff""##
                    };
                    let _ = writeln!(
                        body,
                        r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"{stroke} data-row="{r}" data-col="{c}" data-value="{}" data-marked="{marked}"/>"#,
                        num(v)
                    );
                    let label = if v.is_finite() { format!("{v:.3}") } else { num(v) };
                    let _ = writeln!(
                        body,
                        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{label}</text>"#,
                        x + CELL / 2.0,
                        y + CELL / 2.0 + 4.0
                    );
                }
            }
            body.push_str("</g>\n");
            x0 += cols as f64 * CELL + GAP + MARGIN;
            height = height.max(MARGIN + rows as f64 * CELL + 20.0);
        }
        let mut notes_y = height;
        for note in &self.notes {
            notes_y += 16.0;
            let _ = writeln!(
                body,
                r#"<text x="10" y="{notes_y}" font-size="11">{}</text>"#,
                xml(note)
            );
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" data-command=\"{}\">\n{body}</svg>\n",
            x0,
            notes_y + 10.0,
            xml(&self.metadata.command)
        )
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json()? + "\n",
            Format::Svg => self.to_svg(),
        })
    }

    /// Writes to `dir/<stem>.<ext>` and returns the path.
    pub fn write_to(&self, dir: &Path, stem: &str, format: Format) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::State(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{stem}.{}", format.extension()));
        std::fs::write(&path, self.render(format)?)
            .map_err(|e| Error::State(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear blue-to-yellow ramp; non-finite cells are grey.
fn colour(v: f64, lo: f64, hi: f64) -> String {
    if !v.is_finite() {
        return "#bbbbbb".into();
    }
    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(40.0, 250.0),
        lerp(60.0, 220.0),
        lerp(140.0, 40.0)
    )
}
