//! Per-utterance feature cache files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8 | magic `SERTKMEL` |
//! | 4 | format version (u32, currently 1) |
//! | 8 | DSP config fingerprint (u64) |
//! | 8 | source file size in bytes (u64) |
//! | 8 | source modification time, ns since the Unix epoch (u64) |
//! | 4 | mel bands (u32) |
//! | 4 | stored frames (u32), after padding or truncation |
//! | 4 | frames before padding or truncation (u32) |
//! | 8 | utterance duration in seconds (f64) |
//! | 8 | log floor value (f64) |
//! | 8 * bands * frames | values (f64), band-major |
//!
//! A cache entry is fresh when the version, the DSP fingerprint, and the
//! source size and modification time all match.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use sertk_core::dsp::MelSpectrogram;
use sertk_core::fingerprint::fnv64;

use crate::error::{format_err, io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"SERTKMEL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8 + 4 + 4 + 4 + 8 + 8;

/// Identity of the audio file a cache entry was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceStamp {
    pub size: u64,
    pub mtime_ns: u64,
}

impl SourceStamp {
    pub fn of(path: &Path) -> Result<Self> {
        let meta = fs::metadata(path).map_err(io_err(path))?;
        let mtime_ns = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_nanos() as u64);
        Ok(Self { size: meta.len(), mtime_ns })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub version: u32,
    pub dsp_fingerprint: u64,
    pub source: SourceStamp,
    pub n_mels: u32,
    pub n_frames: u32,
    pub raw_frames: u32,
    pub duration: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedFeatures {
    pub spec: MelSpectrogram,
    pub source: SourceStamp,
    pub raw_frames: usize,
    pub duration: f64,
}

/// File name for an utterance id. Ids made only of `[A-Za-z0-9._-]` map to
/// themselves; anything else is replaced and suffixed with a hash so
/// distinct ids never share a file.
pub fn cache_path(dir: &Path, id: &str) -> PathBuf {
    let safe = !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
    let name = if safe {
        id.to_string()
    } else {
        let cleaned: String = id.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        format!("{cleaned}-{:016x}", fnv64(id.as_bytes()))
    };
    dir.join(format!("{name}.mel"))
}

pub fn write_cache(path: &Path, f: &CachedFeatures) -> Result<()> {
    let (m, t) = (f.spec.n_mels(), f.spec.n_frames());
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m * t);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&f.spec.fingerprint().to_le_bytes());
    buf.extend_from_slice(&f.source.size.to_le_bytes());
    buf.extend_from_slice(&f.source.mtime_ns.to_le_bytes());
    for v in [m, t, f.raw_frames] {
        let v = u32::try_from(v).map_err(|_| format_err(path, "dimension exceeds u32"))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&f.duration.to_le_bytes());
    buf.extend_from_slice(&f.spec.floor().to_le_bytes());
    for v in f.spec.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    // Write-then-rename so an interrupted run never leaves a torn file.
    let tmp = path.with_extension("mel.tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(&buf).map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn parse_header(path: &Path, b: &[u8]) -> Result<CacheHeader> {
    if b.len() < HEADER_LEN || &b[..8] != MAGIC {
        return Err(format_err(path, "not a sertk feature cache"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::Version { path: path.into(), found: version, supported: VERSION });
    }
    Ok(CacheHeader {
        version,
        dsp_fingerprint: u64_at(12),
        source: SourceStamp { size: u64_at(20), mtime_ns: u64_at(28) },
        n_mels: u32_at(36),
        n_frames: u32_at(40),
        raw_frames: u32_at(44),
        duration: f64::from_bits(u64_at(48)),
        floor: f64::from_bits(u64_at(56)),
    })
}

pub fn read_header(path: &Path) -> Result<CacheHeader> {
    use std::io::Read;
    let mut b = vec![0u8; HEADER_LEN];
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    file.read_exact(&mut b).map_err(|_| format_err(path, "truncated header"))?;
    parse_header(path, &b)
}

pub fn read_cache(path: &Path) -> Result<CachedFeatures> {
    let b = fs::read(path).map_err(io_err(path))?;
    let h = parse_header(path, &b)?;
    let (m, t) = (h.n_mels as usize, h.n_frames as usize);
    let body = &b[HEADER_LEN..];
    if body.len() != 8 * m * t {
        return Err(format_err(path, format!("expected {} value bytes, found {}", 8 * m * t, body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(CachedFeatures {
        spec: MelSpectrogram::from_values(m, t, values, h.floor, h.dsp_fingerprint)?,
        source: h.source,
        raw_frames: h.raw_frames as usize,
        duration: h.duration,
    })
}

/// True when `path` holds a readable entry for this DSP config and source.
pub fn is_fresh(path: &Path, dsp_fingerprint: u64, source: SourceStamp) -> bool {
    read_header(path).is_ok_and(|h| h.dsp_fingerprint == dsp_fingerprint && h.source == source)
}
