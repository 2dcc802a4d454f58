//! External time-series ingestion.
//!
//! Reads a comma-separated series file into complex samples. The first line
//! may be a header and is skipped when it fails to parse; any later
//! non-numeric row is rejected with its line number so dirty data never
//! reaches the analysis stages silently.

use std::fs;
use std::path::Path;

use nalgebra::Complex;

use crate::config::ColumnLayout;
use crate::{CliError, Result};

type C64 = Complex<f64>;

/// Loads a series file and optionally removes its sample mean.
pub fn ingest_series(path: &Path, columns: ColumnLayout, mean_subtract: bool) -> Result<Vec<C64>> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read series `{}`: {e}", path.display()))
    })?;
    let mut values = parse_series_text(&text, columns)?;
    if values.is_empty() {
        return Err(CliError::Config(format!(
            "series `{}` contains no samples",
            path.display()
        )));
    }
    if mean_subtract {
        let mean = values.iter().sum::<C64>() / values.len() as f64;
        for v in &mut values {
            *v -= mean;
        }
    }
    Ok(values)
}

/// Parses series text; exposed separately so emitted files can be re-read.
pub fn parse_series_text(text: &str, columns: ColumnLayout) -> Result<Vec<C64>> {
    let mut values = Vec::new();
    let mut data_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_row(line, columns) {
            Ok(v) => {
                values.push(v);
                data_seen = true;
            }
            Err(reason) => {
                if line_no == 1 && !data_seen {
                    continue;
                }
                return Err(CliError::Config(format!(
                    "series line {line_no}: {reason}"
                )));
            }
        }
    }
    Ok(values)
}

fn parse_row(line: &str, columns: ColumnLayout) -> std::result::Result<C64, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let number = |s: &str| -> std::result::Result<f64, String> {
        s.parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number"))
    };
    match columns {
        ColumnLayout::Real => {
            if fields.is_empty() {
                return Err("empty row".to_string());
            }
            Ok(C64::new(number(fields[0])?, 0.0))
        }
        ColumnLayout::ReIm => {
            if fields.len() < 2 {
                return Err(format!("expected two columns, found {}", fields.len()));
            }
            Ok(C64::new(number(fields[0])?, number(fields[1])?))
        }
    }
}

/// Writes a complex series as `re,im` rows with exact round-trip precision.
pub fn series_csv(values: &[C64]) -> String {
    let mut out = String::from("re,im\n");
    for v in values {
        out.push_str(&format!("{:.16e},{:.16e}\n", v.re, v.im));
    }
    out
}
