use std::path::Path;

use sertk_core::dsp::{pad_or_truncate, MelExtractor};

use crate::audio::load_utterance;
use crate::cache::{self, CachedFeatures, SourceStamp};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::tables::{self, ItemErrorRow, ManifestRow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturesSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

fn extract_one(cfg: &RunConfig, ex: &MelExtractor, row: &ManifestRow, audio: &Path, out: &Path) -> Result<bool> {
    let stamp = SourceStamp::of(audio)?;
    if cache::is_fresh(out, ex.config().fingerprint(), stamp) {
        return Ok(false);
    }
    let u = load_utterance(&row.utterance_id, &row.speaker, audio, cfg.sample_rate)?;
    let raw = ex.extract_utterance(&u)?;
    let features = CachedFeatures {
        raw_frames: raw.n_frames(),
        spec: pad_or_truncate(&raw, cfg.target_frames),
        source: stamp,
        duration: u.duration(),
    };
    cache::write_cache(out, &features)?;
    Ok(true)
}

/// Computes one cache file per manifest utterance, skipping entries whose
/// DSP fingerprint and source stamp are unchanged. Failures are listed in
/// `<out_dir>/features_errors.csv` and turn the whole run into an error
/// after every other item has been processed.
pub fn cmd_features(cfg: &RunConfig) -> Result<FeaturesSummary> {
    let manifest = cfg.manifest_path();
    let rows = tables::read_manifest(&manifest)?;
    if rows.is_empty() {
        return Err(Error::NoUtterances(manifest));
    }
    let ex = MelExtractor::new(&cfg.dsp())?;
    let base = cfg.audio_base();
    let dir = cfg.cache_path();
    let mut summary = FeaturesSummary { written: 0, skipped: 0, failed: 0 };
    let mut errors = Vec::new();
    for row in &rows {
        let audio = base.join(&row.path);
        let out = cache::cache_path(&dir, &row.utterance_id);
        match extract_one(cfg, &ex, row, &audio, &out) {
            Ok(true) => summary.written += 1,
            Ok(false) => summary.skipped += 1,
            Err(e) => {
                log::error!("{}: {e}", row.utterance_id);
                summary.failed += 1;
                errors.push(ItemErrorRow {
                    utterance_id: row.utterance_id.clone(),
                    path: audio.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    let listing = cfg.out_path().join("features_errors.csv");
    tables::write_table(&listing, "item_errors", tables::ITEM_ERRORS_HEADER, &errors)?;
    log::info!("features: {} written, {} up to date, {} failed", summary.written, summary.skipped, summary.failed);
    if summary.failed > 0 {
        return Err(Error::ItemErrors { failed: summary.failed, total: rows.len(), listing });
    }
    Ok(summary)
}
