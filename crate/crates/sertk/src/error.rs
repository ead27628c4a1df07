use std::path::PathBuf;

/// Errors from file formats, IO and the commands built on them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] sertk_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: unsupported format version {found} (this build reads version {supported})")]
    Version { path: PathBuf, found: u32, supported: u32 },
    #[error("config: {0}")]
    Config(String),
    #[error("no utterances in {0}")]
    NoUtterances(PathBuf),
    #[error("feature cache missing for {count} utterance(s), first {first:?}; run `sertk features` first")]
    MissingFeatures { count: usize, first: String },
    #[error("{failed} of {total} item(s) failed; see {listing}")]
    ItemErrors { failed: usize, total: usize, listing: PathBuf },
    #[error("empty table: nothing to render")]
    EmptyTable,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn format_err(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Error {
    Error::Format { path: path.into(), reason: reason.to_string() }
}
