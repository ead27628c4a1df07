use serde_json::{json, Value};
use sertk_core::synthetic;
use sertk_core::train::{cross_validate_with, Dataset, Example};
use sertk_core::EmotionLabel;

use super::{load_cached, write_file};
use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::report::{confusion_table, render_csv};
use crate::tables::{self, FoldPredictionRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainSource {
    /// Manifest utterances with accepted labels and cached features.
    Manifest,
    /// The configured synthetic corpus.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub examples: usize,
    pub fold_ua: Vec<f64>,
    pub mean_ua: f64,
}

pub fn load_dataset(cfg: &RunConfig, source: TrainSource) -> Result<Dataset> {
    if source == TrainSource::Synthetic {
        return Ok(synthetic::generate(&cfg.synthetic_config())?);
    }
    let manifest = cfg.manifest_path();
    let rows = tables::read_manifest(&manifest)?;
    let labels = tables::read_accepted_labels(&cfg.labels_path())?;
    let labeled: Vec<_> = rows.iter().filter(|r| labels.contains_key(&r.utterance_id)).collect();
    log::info!("train: {} of {} manifest utterances carry accepted labels", labeled.len(), rows.len());
    if labeled.is_empty() {
        return Err(Error::NoUtterances(manifest));
    }
    let cached = load_cached(cfg, &labeled)?;
    let examples = labeled
        .iter()
        .zip(cached)
        .map(|(r, c)| Example {
            id: r.utterance_id.clone(),
            speaker: r.speaker.clone(),
            spec: c.spec,
            label: labels[&r.utterance_id],
        })
        .collect();
    Ok(Dataset::new(examples)?)
}

fn num4(v: f64) -> Value {
    serde_json::from_str(&format!("{v:.4}")).expect("formatted float is JSON")
}

/// Cross-validates on the chosen corpus. Writes one checkpoint per fold,
/// per-fold and pooled confusion matrices, out-of-fold predictions, and
/// `report.json`. Nothing written depends on wall-clock time.
pub fn cmd_train(cfg: &RunConfig, source: TrainSource) -> Result<TrainSummary> {
    let d = load_dataset(cfg, source)?;
    let tc = cfg.train_config();
    let out = cfg.out_path();
    let dsp_fingerprint = d.get(0).spec.fingerprint();
    let report = cross_validate_with(&d, &tc, |fold, params| {
        let c = Checkpoint { params: params.clone(), dsp_fingerprint, fold: Some(fold.fold), seed: cfg.seed };
        checkpoint::save(&out.join(format!("checkpoints/fold{}.json", fold.fold)), &c).map_err(|e| {
            sertk_core::Error::InvalidConfig(format!("saving checkpoint for fold {}: {e}", fold.fold))
        })
    })?;

    let mut predictions = Vec::with_capacity(d.len());
    let mut folds_json = Vec::new();
    for f in &report.folds {
        write_file(&out.join(format!("confusion_fold{}.csv", f.fold)), render_csv(&confusion_table(&f.confusion)?))?;
        for p in &f.predictions {
            let e = d.get(p.index);
            predictions.push(FoldPredictionRow {
                utterance_id: e.id.clone(),
                speaker: e.speaker.clone(),
                fold: f.fold,
                truth: p.truth.as_str().into(),
                predicted: p.predicted.as_str().into(),
                p_angry: p.probs[0],
                p_happy: p.probs[1],
                p_neutral: p.probs[2],
                p_sad: p.probs[3],
            });
        }
        folds_json.push(json!({
            "fold": f.fold,
            "test_size": f.predictions.len(),
            "ua": num4(f.ua),
            "epochs": f.epoch_losses.len(),
            "epoch_losses": f.epoch_losses,
            "checkpoint": format!("checkpoints/fold{}.json", f.fold),
        }));
    }
    predictions.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    tables::write_table(&out.join("predictions.csv"), "fold_predictions", tables::FOLD_PREDICTIONS_HEADER, &predictions)?;
    write_file(&out.join("confusion_pooled.csv"), render_csv(&confusion_table(&report.pooled)?))?;

    let counts = d.class_counts();
    let doc = json!({
        "format": "sertk-train-report",
        "version": 1,
        "source": match source { TrainSource::Manifest => "manifest", TrainSource::Synthetic => "synthetic" },
        "seed": cfg.seed,
        "architecture": tc.model.fingerprint(),
        "dsp_fingerprint": format!("{dsp_fingerprint:016x}"),
        "examples": d.len(),
        "class_counts": EmotionLabel::ALL.iter().map(|l| (l.as_str().to_string(), json!(counts[l.index()]))).collect::<serde_json::Map<_, _>>(),
        "k": report.plan.k,
        "speaker_disjoint": tc.speaker_disjoint,
        "mean_ua": num4(report.mean_ua),
        "folds": folds_json,
        "pooled_confusion": (0..EmotionLabel::COUNT).map(|i| report.pooled.row(i).to_vec()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(&out.join("report.json"), text)?;
    log::info!("train: mean UA {:.4} over {} folds", report.mean_ua, report.plan.k);
    Ok(TrainSummary {
        examples: d.len(),
        fold_ua: report.folds.iter().map(|f| f.ua).collect(),
        mean_ua: report.mean_ua,
    })
}
