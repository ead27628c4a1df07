use std::io::Write as _;

use serde_json::json;
use sertk_core::analyze::{all_emotion_shares, electoral_report, ElectoralReport, EmotionShares, UtterancePrediction};
use sertk_core::model::{argmax, input_tensor};
use sertk_core::EmotionLabel;

use super::{load_cached, write_file};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{format_err, io_err, Error, Result};
use crate::report::{electoral_table, render, shares_table, ReportFormat};
use crate::tables::{self, PredictionRow};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub utterances: usize,
    pub shares: Vec<EmotionShares>,
    pub electoral: ElectoralReport,
}

#[derive(serde::Serialize)]
struct UnmatchedRow<'a> {
    speaker: &'a str,
    side: &'a str,
}

/// Classifies every utterance of the analysis manifest with the configured
/// checkpoint, then writes predictions, per-speaker shares, the electoral
/// join with its unmatched lists, bar charts, and optionally embeddings.
/// Everything lands in `<out_dir>/analysis`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeSummary> {
    let ckpt_path = cfg.checkpoint_path();
    let ckpt = checkpoint::load(&ckpt_path)?;
    let fingerprint = cfg.dsp().fingerprint();
    if ckpt.dsp_fingerprint != fingerprint {
        return Err(format_err(
            &ckpt_path,
            format!(
                "trained on features with DSP fingerprint {:016x}, config gives {fingerprint:016x}",
                ckpt.dsp_fingerprint
            ),
        ));
    }
    if *ckpt.params.config() != cfg.model() {
        return Err(format_err(&ckpt_path, "model architecture differs from the config"));
    }
    let manifest = cfg.analyze_manifest_path();
    let rows = tables::read_manifest(&manifest)?;
    if rows.is_empty() {
        return Err(Error::NoUtterances(manifest));
    }
    let refs: Vec<_> = rows.iter().collect();
    let cached = load_cached(cfg, &refs)?;
    let stage = cfg.embedding_stage()?;
    let out = cfg.out_path().join("analysis");

    let mut preds = Vec::with_capacity(rows.len());
    let mut pred_rows = Vec::with_capacity(rows.len());
    let mut embeddings = Vec::new();
    for (r, c) in rows.iter().zip(&cached) {
        let x = input_tensor(&c.spec);
        let probs = ckpt.params.predict(&x)?;
        let label = EmotionLabel::from_index(argmax(&probs)).unwrap_or(EmotionLabel::Angry);
        let duration = r.duration.unwrap_or(c.duration);
        let p = UtterancePrediction {
            id: r.utterance_id.clone(),
            speaker: r.speaker.clone(),
            label,
            probs: [probs[0], probs[1], probs[2], probs[3]],
            duration,
        };
        p.validate()?;
        pred_rows.push(PredictionRow {
            utterance_id: p.id.clone(),
            speaker: p.speaker.clone(),
            predicted: label.as_str().into(),
            duration,
            p_angry: probs[0],
            p_happy: probs[1],
            p_neutral: probs[2],
            p_sad: probs[3],
        });
        if let Some(stage) = stage {
            let e = ckpt.params.embed(&x, stage)?;
            embeddings.push(json!({
                "utterance_id": p.id,
                "speaker": p.speaker,
                "predicted": label.as_str(),
                "stage": stage.as_str(),
                "shape": e.shape(),
                "values": e.data(),
            }));
        }
        preds.push(p);
    }
    tables::write_table(&out.join("predictions.csv"), "predictions", tables::PREDICTIONS_HEADER, &pred_rows)?;

    let shares = all_emotion_shares(&preds, cfg.weighting()?)?;
    let records = tables::read_electoral(cfg.electoral_path().as_deref())?;
    let electoral = electoral_report(&shares, &records)?;

    let st = shares_table(&shares)?;
    for f in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::SvgBars] {
        write_file(&out.join(format!("shares.{}", f.extension())), render(&st, f))?;
    }
    let joined = out.join("electoral");
    match electoral_table(&electoral) {
        Ok(t) => {
            for f in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::SvgBars] {
                write_file(&joined.with_extension(f.extension()), render(&t, f))?;
            }
        }
        Err(Error::EmptyTable) => {
            log::warn!("analyze: no analyzed speaker matches an electoral record");
            for f in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::SvgBars] {
                let stale = joined.with_extension(f.extension());
                if stale.exists() {
                    std::fs::remove_file(&stale).map_err(io_err(&stale))?;
                }
            }
        }
        Err(e) => return Err(e),
    }
    let unmatched: Vec<UnmatchedRow> = electoral
        .unmatched_shares
        .iter()
        .map(|s| UnmatchedRow { speaker: &s.speaker, side: "shares" })
        .chain(electoral.unmatched_records.iter().map(|r| UnmatchedRow { speaker: &r.speaker, side: "records" }))
        .collect();
    tables::write_table(&out.join("unmatched.csv"), "unmatched", &["speaker", "side"], &unmatched)?;

    let emb_path = out.join("embeddings.jsonl");
    if stage.is_some() {
        let mut buf = Vec::new();
        for e in &embeddings {
            serde_json::to_writer(&mut buf, e).map_err(|e| Error::Config(e.to_string()))?;
            buf.write_all(b"\n").map_err(io_err(&emb_path))?;
        }
        write_file(&emb_path, buf)?;
    }
    log::info!(
        "analyze: {} utterances, {} speakers, {} joined with electoral records",
        preds.len(),
        shares.len(),
        electoral.rows.len()
    );
    Ok(AnalyzeSummary { utterances: preds.len(), shares, electoral })
}
