//! One-JSON-object-per-line files.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| JsonlError::Schema { line: i + 1, message: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let io_err = |source| JsonlError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| JsonlError::Schema { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for it in items {
            serde_json::to_writer(&mut w, it)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_error_has_line() {
        let text = "{\"a\":1}\n\n{\"a\":2}\n{\"a\":\n";
        let err = parse_jsonl::<serde_json::Value>(text).unwrap_err();
        assert!(matches!(err, JsonlError::Schema { line: 4, .. }));
    }

    #[test]
    fn f64_roundtrip_is_bit_exact() {
        let xs = vec![0.1f64, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 0.020000000000000004];
        let back: Vec<f64> = parse_jsonl(&to_jsonl(&xs)).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
