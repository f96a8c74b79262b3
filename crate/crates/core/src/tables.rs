//! Minimal CSV reading/writing for the toolkit's tabular artifacts.
//!
//! All outputs are plain comma-separated tables with a header row. Floats
//! are written with Rust's shortest round-trip formatting, which is
//! deterministic across platforms and thread counts; files written by one
//! run re-parse to bit-identical values.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: empty file")]
    Empty { path: String },
    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    FieldCount {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: cannot parse `{token}` as a number")]
    Parse {
        path: String,
        line: usize,
        token: String,
    },
}

/// Render a table with `header` and float rows.
pub fn to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parse a CSV of floats; returns `(header, rows)`.
pub fn parse_csv(text: &str, path: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), TableError> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or_else(|| TableError::Empty {
        path: path.to_string(),
    })?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let width = header.len();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(TableError::FieldCount {
                path: path.to_string(),
                line: idx + 1,
                expected: width,
                found: fields.len(),
            });
        }
        let mut row = Vec::with_capacity(width);
        for f in fields {
            row.push(f.trim().parse::<f64>().map_err(|_| TableError::Parse {
                path: path.to_string(),
                line: idx + 1,
                token: f.to_string(),
            })?);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Read and parse a CSV file of floats.
pub fn read_csv_file(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), TableError> {
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, &path.display().to_string())
}

/// Write a string to a file, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<(), TableError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| TableError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })
}
