//! The five subcommands. Each takes a resolved [`RunConfig`], writes its
//! artifacts under the configured output directory, and returns a summary
//! for the caller to print. Reruns with the same config and seed produce
//! identical files.

mod analyze;
mod annotate;
mod features;
mod report;
mod train;

pub use analyze::{cmd_analyze, AnalyzeSummary};
pub use annotate::{cmd_annotate, AnnotateSummary};
pub use features::{cmd_features, FeaturesSummary};
pub use report::cmd_report;
pub use train::{cmd_train, load_dataset, TrainSource, TrainSummary};

use std::fs;
use std::path::{Path, PathBuf};

use sertk_core::dsp::DspConfig;

use crate::cache::{self, CachedFeatures};
use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::tables::ManifestRow;

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Loads the cached features of every manifest row, failing with a single
/// error that lists how many are missing or stale.
pub(crate) fn load_cached(cfg: &RunConfig, rows: &[&ManifestRow]) -> Result<Vec<CachedFeatures>> {
    let dsp: DspConfig = cfg.dsp();
    let fingerprint = dsp.fingerprint();
    let dir = cfg.cache_path();
    let mut missing: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let path: PathBuf = cache::cache_path(&dir, &r.utterance_id);
        match cache::read_cache(&path) {
            Ok(c) if c.spec.fingerprint() == fingerprint => out.push(c),
            _ => missing.push(&r.utterance_id),
        }
    }
    if let Some(first) = missing.first() {
        return Err(Error::MissingFeatures { count: missing.len(), first: first.to_string() });
    }
    Ok(out)
}
