//! Report sinks: human-readable tables on stdout, machine-readable JSON
//! lines or CSV at a requested path (selected by file extension).

use serde::Serialize;
use spdpool_core::{Error, Result};
use std::path::Path;

/// Output format inferred from the `--out` extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    JsonLines,
    Csv,
}

pub fn format_for_path(path: &Path) -> Result<OutFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Ok(OutFormat::JsonLines),
        Some("csv") => Ok(OutFormat::Csv),
        other => Err(Error::ConfigError(format!(
            "cannot infer output format from extension {other:?}; use .jsonl or .csv"
        ))),
    }
}

/// Writes one JSON object per row.
pub fn write_jsonl<T: Serialize, P: AsRef<Path>>(path: P, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::ParseError(format!("serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes rows with the csv crate (header derived from the serialized
/// field names).
pub fn write_csv<T: Serialize, P: AsRef<Path>>(path: P, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::ParseError(format!("cannot open csv writer: {e}")))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::ParseError(format!("csv write failed: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::ParseError(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Dispatches on the path extension.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    match format_for_path(path)? {
        OutFormat::JsonLines => write_jsonl(path, rows),
        OutFormat::Csv => write_csv(path, rows),
    }
}

/// Fixed-width table printer for the human summary.
pub fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = w))
            .collect();
        println!("  {}", padded.join("  "));
    };
    line(headers.iter().map(|h| h.to_string()).collect());
    line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for row in rows {
        line(row.clone());
    }
}
