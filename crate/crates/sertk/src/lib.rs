//! File formats, audio ingest and the `sertk` command line on top of
//! `sertk-core`.

pub mod audio;
pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;
pub mod report;
pub mod tables;

pub use error::{Error, Result};
