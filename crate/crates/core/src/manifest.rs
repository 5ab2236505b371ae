//! Dataset manifest CSV: `record_id,image_path,query,annotation_path`.
//!
//! Fields are quoted only when they contain a comma, a double quote or a line
//! break, and records end with LF, so re-writing a file this module produced
//! reproduces it byte for byte.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;

pub const MANIFEST_HEADER: [&str; 4] = ["record_id", "image_path", "query", "annotation_path"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("missing or wrong header row, expected `{}`", MANIFEST_HEADER.join(","))]
    MissingHeader,
    #[error("duplicate record_id {0:?}")]
    DuplicateRecordId(String),
    #[error("row {line} has {found} fields, expected 4")]
    RaggedRow { line: u64, found: usize },
    #[error("row {line} has an empty {field}")]
    EmptyField { line: u64, field: &'static str },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub record_id: String,
    pub image_path: PathBuf,
    pub query: String,
    pub annotation_path: PathBuf,
}

impl ManifestRecord {
    /// The drawing this record belongs to: the record id without any
    /// `#q<j>` augmentation suffix.
    pub fn base_id(&self) -> &str {
        base_id(&self.record_id)
    }
}

pub fn base_id(record_id: &str) -> &str {
    match record_id.rfind("#q") {
        Some(pos) if pos + 2 < record_id.len() && record_id[pos + 2..].bytes().all(|b| b.is_ascii_digit()) => {
            &record_id[..pos]
        }
        _ => record_id,
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows = reader.records();

    match rows.next() {
        Some(Ok(header)) if header.iter().eq(MANIFEST_HEADER.iter().copied()) => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(ManifestError::MissingHeader),
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(ManifestError::RaggedRow { line, found: row.len() });
        }
        for (i, field) in [(0, "record_id"), (1, "image_path"), (3, "annotation_path")] {
            if row[i].is_empty() {
                return Err(ManifestError::EmptyField { line, field });
            }
        }
        if !seen.insert(row[0].to_string()) {
            return Err(ManifestError::DuplicateRecordId(row[0].to_string()));
        }
        records.push(ManifestRecord {
            record_id: row[0].to_string(),
            image_path: PathBuf::from(&row[1]),
            query: row[2].to_string(),
            annotation_path: PathBuf::from(&row[3]),
        });
    }
    Ok(records)
}

pub fn manifest_to_string(records: &[ManifestRecord]) -> Result<String, ManifestError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.record_id.as_str()) {
            return Err(ManifestError::DuplicateRecordId(r.record_id.clone()));
        }
    }
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(MANIFEST_HEADER)?;
    for r in records {
        writer.write_record([
            r.record_id.as_str(),
            &r.image_path.to_string_lossy(),
            r.query.as_str(),
            &r.annotation_path.to_string_lossy(),
        ])?;
    }
    let bytes =
        writer.into_inner().map_err(|e| ManifestError::Io { path: "<memory>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("manifest fields are UTF-8"))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
    parse_manifest(&text)
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<(), ManifestError> {
    let text = manifest_to_string(records)?;
    fsutil::write_atomic(path, text.as_bytes())
        .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })
}
