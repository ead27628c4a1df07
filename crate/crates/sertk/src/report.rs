//! Report tables and their renderers.
//!
//! A [`ReportTable`] is a string key column followed by numeric columns.
//! Values are rounded to four decimals when the table is built, so CSV and
//! JSON renderings carry every digit and parse back to an equal table.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Number, Value};
use sertk_core::analyze::{ElectoralReport, EmotionShares};
use sertk_core::train::ConfusionMatrix;
use sertk_core::EmotionLabel;

use crate::error::{Error, Result};

pub const FORMAT: &str = "sertk-table";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    SvgBars,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::SvgBars => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg_bars" => Ok(Self::SvgBars),
            other => Err(Error::Config(format!("unknown report format {other:?} (csv, json, svg_bars)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    key: String,
    columns: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

fn round4(v: f64) -> f64 {
    format!("{v:.4}").parse().expect("formatted float parses")
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Config(format!("report table: {}", reason.into()))
}

impl ReportTable {
    pub fn new(key: impl Into<String>, columns: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let key = key.into();
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut names: Vec<&str> = columns.iter().map(String::as_str).collect();
        names.push(&key);
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) || names.iter().any(|n| n.is_empty()) {
            return Err(bad("column names must be non-empty and distinct"));
        }
        let mut out = Vec::with_capacity(rows.len());
        for (k, values) in rows {
            if values.len() != columns.len() {
                return Err(bad(format!("row {k:?} has {} values for {} columns", values.len(), columns.len())));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(bad(format!("row {k:?} holds non-finite value {v}")));
            }
            out.push((k, values.into_iter().map(round4).collect()));
        }
        Ok(Self { key, columns, rows: out })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[(String, Vec<f64>)] {
        &self.rows
    }
}

fn label_columns() -> Vec<String> {
    EmotionLabel::ALL.iter().map(|l| l.as_str().to_ascii_lowercase()).collect()
}

/// One row per speaker with the four percentages.
pub fn shares_table(shares: &[EmotionShares]) -> Result<ReportTable> {
    ReportTable::new("speaker", label_columns(), shares.iter().map(|s| (s.speaker.clone(), s.shares.to_vec())).collect())
}

/// Joined electoral rows: four shares, vote share, margin.
pub fn electoral_table(r: &ElectoralReport) -> Result<ReportTable> {
    let mut cols = label_columns();
    cols.extend(["vote_share".into(), "margin".into()]);
    let rows = r
        .rows
        .iter()
        .map(|row| {
            let mut v = row.shares.to_vec();
            v.extend([row.vote_share, row.margin]);
            (row.speaker.clone(), v)
        })
        .collect();
    ReportTable::new("speaker", cols, rows)
}

/// Rows are true labels, columns predicted labels.
pub fn confusion_table(c: &ConfusionMatrix) -> Result<ReportTable> {
    let rows = EmotionLabel::ALL
        .iter()
        .map(|l| (l.as_str().to_ascii_lowercase(), c.row(l.index()).iter().map(|&n| n as f64).collect()))
        .collect();
    ReportTable::new("truth", label_columns(), rows)
}

pub fn render(t: &ReportTable, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => render_csv(t).into_bytes(),
        ReportFormat::Json => render_json(t).into_bytes(),
        ReportFormat::SvgBars => render_svg(t).into_bytes(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(t: &ReportTable) -> String {
    let mut out = format!("# sertk table v{VERSION}\n{}", csv_field(&t.key));
    for c in &t.columns {
        let _ = write!(out, ",{}", csv_field(c));
    }
    out.push('\n');
    for (k, values) in &t.rows {
        out.push_str(&csv_field(k));
        for v in values {
            let _ = write!(out, ",{v:.4}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<ReportTable> {
    let body = match text.lines().next() {
        Some(l) if l.starts_with("# sertk ") => {
            let version = l.strip_prefix("# sertk table v").and_then(|v| v.trim().parse::<u32>().ok());
            match version {
                Some(VERSION) => &text[l.len()..],
                Some(found) => return Err(Error::Version { path: "<table>".into(), found, supported: VERSION }),
                None => return Err(bad(format!("unexpected header {l:?}"))),
            }
        }
        _ => text,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.trim_start().as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut names = header.iter().map(str::to_string);
    let key = names.next().ok_or_else(|| bad("missing header"))?;
    let columns: Vec<String> = names.collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut fields = rec.iter();
        let k = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("row {k:?}: {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((k, values));
    }
    ReportTable::new(key, columns, rows)
}

fn number4(v: f64) -> Value {
    Value::Number(Number::from_str(&format!("{v:.4}")).expect("formatted float is a JSON number"))
}

pub fn render_json(t: &ReportTable) -> String {
    let rows = t
        .rows
        .iter()
        .map(|(k, values)| {
            let mut m = Map::new();
            m.insert(t.key.clone(), Value::String(k.clone()));
            for (c, &v) in t.columns.iter().zip(values) {
                m.insert(c.clone(), number4(v));
            }
            Value::Object(m)
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("format".into(), FORMAT.into());
    doc.insert("version".into(), VERSION.into());
    doc.insert("key".into(), t.key.clone().into());
    doc.insert("columns".into(), t.columns.iter().cloned().map(Value::String).collect());
    doc.insert("rows".into(), Value::Array(rows));
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<ReportTable> {
    let doc: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if doc.get("format").and_then(Value::as_str) != Some(FORMAT) {
        return Err(bad("not a sertk table"));
    }
    let version = doc.get("version").and_then(Value::as_u64).unwrap_or(0);
    if version != u64::from(VERSION) {
        return Err(Error::Version { path: "<table>".into(), found: version as u32, supported: VERSION });
    }
    let key = doc.get("key").and_then(Value::as_str).ok_or_else(|| bad("missing key"))?.to_string();
    let columns: Vec<String> = doc
        .get("columns")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing columns"))?
        .iter()
        .map(|c| c.as_str().map(str::to_string).ok_or_else(|| bad("column names must be strings")))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for row in doc.get("rows").and_then(Value::as_array).ok_or_else(|| bad("missing rows"))? {
        let k = row.get(&key).and_then(Value::as_str).ok_or_else(|| bad("row without key"))?.to_string();
        let values = columns
            .iter()
            .map(|c| row.get(c).and_then(Value::as_f64).ok_or_else(|| bad(format!("row {k:?} lacks numeric {c}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((k, values));
    }
    ReportTable::new(key, columns, rows)
}

const PALETTE: [&str; 6] = ["#d62728", "#ff7f0e", "#7f7f7f", "#1f77b4", "#2ca02c", "#9467bd"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart: one group per row, one bar per column, a zero
/// baseline, and a legend. Output depends only on the table.
pub fn render_svg(t: &ReportTable) -> String {
    const BAR: f64 = 14.0;
    const GAP: f64 = 18.0;
    const PLOT_H: f64 = 240.0;
    const LEFT: f64 = 56.0;
    const TOP: f64 = 40.0;
    let ncol = t.columns.len().max(1);
    let group_w = BAR * ncol as f64 + GAP;
    let width = LEFT + group_w * t.rows.len() as f64 + 20.0;
    let height = TOP + PLOT_H + 60.0;
    let all = t.rows.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let y = |v: f64| TOP + (hi - v) / span * PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (i, c) in t.columns.iter().enumerate() {
        let x = LEFT + 90.0 * i as f64;
        let _ = writeln!(s, "<rect x=\"{x:.2}\" y=\"10\" width=\"10\" height=\"10\" fill=\"{}\"/>", PALETTE[i % PALETTE.len()]);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"19\">{}</text>", x + 14.0, xml_escape(c));
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.2}</text>", LEFT - 6.0, TOP + 4.0);
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{lo:.2}</text>", LEFT - 6.0, TOP + PLOT_H + 4.0);
    for (g, (k, values)) in t.rows.iter().enumerate() {
        let x0 = LEFT + group_w * g as f64 + GAP / 2.0;
        for (i, &v) in values.iter().enumerate() {
            let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{BAR:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{} {}: {v:.4}</title></rect>",
                x0 + BAR * i as f64,
                bottom - top,
                PALETTE[i % PALETTE.len()],
                xml_escape(k),
                xml_escape(&t.columns[i]),
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            x0 + BAR * ncol as f64 / 2.0,
            TOP + PLOT_H + 18.0,
            xml_escape(k)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.2}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"black\"/>",
        y(0.0),
        width - 20.0
    );
    s.push_str("</svg>\n");
    s
}
