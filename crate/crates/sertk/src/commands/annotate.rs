use std::fmt::Write as _;

use serde::Serialize;
use sertk_core::annotate::{aggregate_votes_with, class_summary, ClassSummary};

use super::write_file;
use crate::config::RunConfig;
use crate::error::Result;
use crate::tables::{self, LabelRow};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotateSummary {
    pub utterances: usize,
    pub summary: ClassSummary,
}

#[derive(Serialize)]
struct ClassTableRow {
    label: String,
    count: usize,
    mean_confidence: Option<f64>,
    confidence_percent: Option<f64>,
}

const CLASS_HEADER: &[&str] = &["label", "count", "mean_confidence", "confidence_percent"];

fn class_text(s: &ClassSummary) -> String {
    let mut out = String::from("emotion   utterances  confidence (%)\n");
    for r in &s.rows {
        let pct = r.confidence_percent.map_or("-".to_string(), |p| format!("{p:.4}"));
        let _ = writeln!(out, "{:<9} {:>10}  {:>14}", r.label.as_str(), r.count, pct);
    }
    let _ = writeln!(out, "accepted {}, discarded {}", s.accepted, s.discarded);
    out
}

/// Aggregates every vote set into `labels.csv`, then writes the per-class
/// summary as `table1.csv` and `table1.txt`. When nothing is accepted the
/// labels are still written and the summary error is returned.
pub fn cmd_annotate(cfg: &RunConfig) -> Result<AnnotateSummary> {
    let sets = tables::read_votes(&cfg.votes_path())?;
    let policy = cfg.policy();
    let labels: Vec<_> = sets.iter().map(|s| aggregate_votes_with(s, policy)).collect();
    let rows: Vec<LabelRow> = labels.iter().map(tables::label_row).collect();
    tables::write_table(&cfg.labels_path(), "labels", tables::LABELS_HEADER, &rows)?;
    let summary = class_summary(&labels)?;
    let class_rows: Vec<ClassTableRow> = summary
        .rows
        .iter()
        .map(|r| ClassTableRow {
            label: r.label.as_str().into(),
            count: r.count,
            mean_confidence: r.mean_confidence,
            confidence_percent: r.confidence_percent,
        })
        .collect();
    let out = cfg.out_path();
    tables::write_table(&out.join("table1.csv"), "class_summary", CLASS_HEADER, &class_rows)?;
    write_file(&out.join("table1.txt"), class_text(&summary))?;
    log::info!("annotate: {} accepted, {} discarded", summary.accepted, summary.discarded);
    Ok(AnnotateSummary { utterances: labels.len(), summary })
}
