//! Delimited-text tables: manifests, votes, labels, electoral records and
//! the per-utterance outputs of the commands.
//!
//! Every file written starts with a `# sertk <kind> v<version>` line. On
//! read that line is optional, so hand-written fixtures work, but when
//! present its kind and version must match.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sertk_core::analyze::ElectoralRecord;
use sertk_core::annotate::{AggregatedLabel, Status, Vote, VoteSet};
use sertk_core::EmotionLabel;

use crate::error::{format_err, io_err, Error, Result};

pub const VERSION: u32 = 1;

/// Built-in electoral fixture: vote share and margin per speaker, defeats
/// stored as negative margins.
pub const ELECTORAL_FIXTURE: &str = include_str!("../data/electoral.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub speaker: String,
    pub path: String,
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRow {
    pub utterance_id: String,
    pub evaluator: String,
    pub label: String,
    pub confidence: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub utterance_id: String,
    pub status: String,
    pub label: String,
    pub confidence: Option<f64>,
    pub resolution: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectoralRow {
    pub speaker: String,
    pub vote_share: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemErrorRow {
    pub utterance_id: String,
    pub path: String,
    pub error: String,
}

/// One out-of-fold prediction from cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictionRow {
    pub utterance_id: String,
    pub speaker: String,
    pub fold: usize,
    pub truth: String,
    pub predicted: String,
    pub p_angry: f64,
    pub p_happy: f64,
    pub p_neutral: f64,
    pub p_sad: f64,
}

/// One classified utterance from `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub utterance_id: String,
    pub speaker: String,
    pub predicted: String,
    pub duration: f64,
    pub p_angry: f64,
    pub p_happy: f64,
    pub p_neutral: f64,
    pub p_sad: f64,
}

fn check_header(path: &Path, text: &str, kind: &str) -> Result<()> {
    let Some(first) = text.lines().next() else { return Ok(()) };
    let Some(rest) = first.strip_prefix("# sertk ") else { return Ok(()) };
    let mut parts = rest.split_whitespace();
    let found_kind = parts.next().unwrap_or("");
    if found_kind != kind {
        return Err(format_err(path, format!("expected a {kind} table, found {found_kind}")));
    }
    let version = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| format_err(path, "malformed version line"))?;
    if version != VERSION {
        return Err(Error::Version { path: path.into(), found: version, supported: VERSION });
    }
    Ok(())
}

pub fn parse_table<T: DeserializeOwned>(path: &Path, text: &str, kind: &str) -> Result<Vec<T>> {
    check_header(path, text, kind)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(String::new(), |p| format!("line {}: ", p.line()));
                format_err(path, format!("{line}{e}"))
            })
        })
        .collect()
}

pub fn read_table<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_table(path, &text, kind)
}

pub fn render_table<T: Serialize>(kind: &str, header: &[&str], rows: &[T]) -> Result<String> {
    let mut out = format!("# sertk {kind} v{VERSION}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        let fail = |e: csv::Error| Error::Config(format!("writing {kind} table: {e}"));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.serialize(r).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::Config(format!("writing {kind} table: {e}")))?;
    }
    String::from_utf8(out).map_err(|e| Error::Config(e.to_string()))
}

pub fn write_table<T: Serialize>(path: &Path, kind: &str, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, render_table(kind, header, rows)?).map_err(io_err(path))
}

pub const MANIFEST_HEADER: &[&str] = &["utterance_id", "speaker", "path", "duration"];
pub const VOTES_HEADER: &[&str] = &["utterance_id", "evaluator", "label", "confidence"];
pub const LABELS_HEADER: &[&str] = &["utterance_id", "status", "label", "confidence", "resolution"];
pub const ELECTORAL_HEADER: &[&str] = &["speaker", "vote_share", "margin"];
pub const ITEM_ERRORS_HEADER: &[&str] = &["utterance_id", "path", "error"];
pub const FOLD_PREDICTIONS_HEADER: &[&str] =
    &["utterance_id", "speaker", "fold", "truth", "predicted", "p_angry", "p_happy", "p_neutral", "p_sad"];
pub const PREDICTIONS_HEADER: &[&str] =
    &["utterance_id", "speaker", "predicted", "duration", "p_angry", "p_happy", "p_neutral", "p_sad"];

/// Manifest rows with non-empty, unique ids.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let rows: Vec<ManifestRow> = read_table(path, "manifest")?;
    let mut seen = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        if r.utterance_id.is_empty() || r.speaker.is_empty() || r.path.is_empty() {
            return Err(format_err(path, format!("row {}: utterance_id, speaker and path are required", i + 1)));
        }
        if !seen.insert(r.utterance_id.as_str()) {
            return Err(format_err(path, format!("duplicate utterance_id {:?}", r.utterance_id)));
        }
        if r.duration.is_some_and(|d| !(d.is_finite() && d > 0.0)) {
            return Err(format_err(path, format!("row {}: duration must be positive", i + 1)));
        }
    }
    Ok(rows)
}

/// Groups vote rows by utterance, keeping first-appearance order.
pub fn vote_sets(path: &Path, rows: &[VoteRow]) -> Result<Vec<VoteSet>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<Vote>> = std::collections::HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        let label: EmotionLabel = r.label.parse().map_err(|e| format_err(path, format!("row {}: {e}", i + 1)))?;
        let entry = groups.entry(r.utterance_id.as_str()).or_insert_with(|| {
            order.push(r.utterance_id.as_str());
            Vec::new()
        });
        entry.push(Vote::new(r.evaluator.clone(), label, r.confidence));
    }
    order
        .into_iter()
        .map(|id| VoteSet::new(id, groups.remove(id).unwrap_or_default()).map_err(|e| format_err(path, e)))
        .collect()
}

pub fn read_votes(path: &Path) -> Result<Vec<VoteSet>> {
    let rows: Vec<VoteRow> = read_table(path, "votes")?;
    vote_sets(path, &rows)
}

pub fn label_row(a: &AggregatedLabel) -> LabelRow {
    LabelRow {
        utterance_id: a.utterance.clone(),
        status: match a.status {
            Status::Accepted => "accepted",
            Status::Discarded => "discarded",
        }
        .into(),
        label: a.label.map_or(String::new(), |l| l.as_str().into()),
        confidence: a.confidence,
        resolution: a.resolution.as_str().into(),
    }
}

/// Accepted labels keyed by utterance id.
pub fn read_accepted_labels(path: &Path) -> Result<std::collections::HashMap<String, EmotionLabel>> {
    let rows: Vec<LabelRow> = read_table(path, "labels")?;
    let mut out = std::collections::HashMap::new();
    for r in rows.into_iter().filter(|r| r.status == "accepted") {
        let label = r.label.parse().map_err(|e| format_err(path, format!("{}: {e}", r.utterance_id)))?;
        if out.insert(r.utterance_id.clone(), label).is_some() {
            return Err(format_err(path, format!("duplicate utterance_id {:?}", r.utterance_id)));
        }
    }
    Ok(out)
}

pub fn parse_electoral(path: &Path, text: &str) -> Result<Vec<ElectoralRecord>> {
    parse_table::<ElectoralRow>(path, text, "electoral")?
        .into_iter()
        .map(|r| ElectoralRecord::new(r.speaker, r.vote_share, r.margin).map_err(|e| format_err(path, e)))
        .collect()
}

/// Reads `path`, or the built-in fixture when `None`.
pub fn read_electoral(path: Option<&Path>) -> Result<Vec<ElectoralRecord>> {
    match path {
        Some(p) => parse_electoral(p, &fs::read_to_string(p).map_err(io_err(p))?),
        None => parse_electoral(Path::new("<built-in electoral fixture>"), ELECTORAL_FIXTURE),
    }
}
