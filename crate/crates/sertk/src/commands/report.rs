use std::fs;
use std::path::{Path, PathBuf};

use super::write_file;
use crate::error::{format_err, io_err, Result};
use crate::report::{parse_csv, parse_json, render, ReportFormat};

/// Re-renders a table written by another command (CSV or JSON, detected
/// from the content) in `format`. Without `output` the result goes next to
/// the input with the format's extension. Returns the path written.
pub fn cmd_report(input: &Path, format: ReportFormat, output: Option<&Path>) -> Result<PathBuf> {
    let text = fs::read_to_string(input).map_err(io_err(input))?;
    let table = if text.trim_start().starts_with('{') { parse_json(&text) } else { parse_csv(&text) }
        .map_err(|e| format_err(input, e))?;
    let out = output.map_or_else(|| input.with_extension(format.extension()), Path::to_path_buf);
    if out == input {
        return Err(format_err(input, "output would overwrite the input"));
    }
    write_file(&out, render(&table, format))?;
    Ok(out)
}
