//! Ground-truth and prediction annotation JSON, plus entry-count statistics.
//!
//! The writer emits one canonical form: a top-level array of objects with the
//! keys `geometric_characteristic`, `tolerance` and `datum`, in that order, with
//! datums joined by `|` (empty string when absent). The reader is liberal and
//! accepts the key synonyms from [`canonical_key`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::fsutil;
use crate::model::{
    canonical_symbol, normalize_field_value, DrawingAnnotation, FeatureControlFrame, FieldKind, ModelError,
};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation{}: {reason}", index.map(|i| format!(" at entry {i}")).unwrap_or_default())]
    SchemaViolation { index: Option<usize>, reason: String },
    #[error("unknown GD&T symbol {symbol:?} at entry {index}")]
    UnknownSymbol { index: usize, symbol: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const KEY_CHARACTERISTIC: &str = "geometric_characteristic";
pub const KEY_TOLERANCE: &str = "tolerance";
pub const KEY_DATUM: &str = "datum";

const KEY_SYNONYMS: &[(&str, FieldKind)] = &[
    (KEY_CHARACTERISTIC, FieldKind::Characteristic),
    ("characteristic", FieldKind::Characteristic),
    ("gdt_symbol", FieldKind::Characteristic),
    ("symbol", FieldKind::Characteristic),
    (KEY_TOLERANCE, FieldKind::Tolerance),
    ("tolerance_value", FieldKind::Tolerance),
    ("tol", FieldKind::Tolerance),
    (KEY_DATUM, FieldKind::Datum),
    ("datum_reference", FieldKind::Datum),
    ("datums", FieldKind::Datum),
    ("datum_references", FieldKind::Datum),
];

/// Map an object key (or one of its synonyms) to the field it names.
/// Case, surrounding whitespace and `-`/space separators are ignored.
pub fn canonical_key(key: &str) -> Option<FieldKind> {
    let folded: String =
        key.trim().to_lowercase().chars().map(|c| if c == '-' || c == ' ' { '_' } else { c }).collect();
    KEY_SYNONYMS.iter().find(|(k, _)| *k == folded).map(|(_, kind)| *kind)
}

/// Raw text of the three fields of one entry, as found in an object.
#[derive(Debug, Default)]
pub(crate) struct RawEntry {
    pub characteristic: Option<String>,
    pub tolerance: Option<String>,
    pub datums: Vec<String>,
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Split a datum string into labels. `|`, `,` and `;` separate labels.
pub(crate) fn split_datum_text(s: &str) -> Vec<String> {
    s.split(['|', ',', ';']).map(str::to_string).collect()
}

pub(crate) fn raw_entry(obj: &serde_json::Map<String, Value>) -> Result<RawEntry, String> {
    let mut entry = RawEntry::default();
    for (key, value) in obj {
        match canonical_key(key) {
            Some(FieldKind::Characteristic) => {
                entry.characteristic = match value {
                    Value::Null => None,
                    v => Some(scalar_text(v).ok_or("characteristic must be text")?),
                }
            }
            Some(FieldKind::Tolerance) => {
                entry.tolerance = match value {
                    Value::Null => None,
                    v => Some(scalar_text(v).ok_or("tolerance must be text or number")?),
                }
            }
            Some(FieldKind::Datum) => {
                entry.datums = match value {
                    Value::Null => Vec::new(),
                    Value::String(s) => split_datum_text(s),
                    Value::Array(items) => items
                        .iter()
                        .map(|i| scalar_text(i).ok_or("datum labels must be text"))
                        .collect::<Result<_, _>>()?,
                    _ => return Err("datum must be text or an array of labels".into()),
                }
            }
            None => {}
        }
    }
    Ok(entry)
}

/// Parse an annotation document, normalizing every value.
pub fn parse_annotation(drawing_id: &str, text: &str) -> Result<DrawingAnnotation, AnnotationError> {
    let value: Value = serde_json::from_str(text).map_err(|e| AnnotationError::MalformedJson(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(AnnotationError::SchemaViolation { index: None, reason: "top level must be an array".into() });
    };

    let mut fcfs = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let violation = |reason: String| AnnotationError::SchemaViolation { index: Some(index), reason };
        let Value::Object(obj) = item else {
            return Err(violation("entry must be an object".into()));
        };
        let entry = raw_entry(obj).map_err(violation)?;
        let symbol = entry.characteristic.ok_or_else(|| violation("missing geometric characteristic".into()))?;
        let characteristic =
            canonical_symbol(&symbol).map_err(|_| AnnotationError::UnknownSymbol { index, symbol: symbol.clone() })?;
        let tolerance = entry.tolerance.unwrap_or_default();
        let fcf = FeatureControlFrame::new(characteristic, &tolerance, &entry.datums).map_err(|e| match e {
            ModelError::EmptyValue => violation("empty tolerance".into()),
            other => violation(other.to_string()),
        })?;
        fcfs.push(fcf);
    }
    Ok(DrawingAnnotation::new(drawing_id, fcfs))
}

#[derive(Serialize)]
struct CanonicalEntry<'a> {
    geometric_characteristic: String,
    tolerance: &'a str,
    datum: String,
}

/// Canonical JSON text: 2-space indentation, fixed key order, raw UTF-8 glyphs.
pub fn serialize_annotation(annotation: &DrawingAnnotation) -> String {
    let entries: Vec<CanonicalEntry<'_>> = annotation
        .fcfs
        .iter()
        .map(|f| CanonicalEntry {
            geometric_characteristic: f.characteristic.glyph(),
            tolerance: &f.tolerance,
            datum: f.joined_datums(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("annotation entries always serialize")
}

/// Read `<dir>/<drawing_id>.json`; the drawing id is the file stem.
pub fn read_annotation_file(path: &Path) -> Result<DrawingAnnotation, AnnotationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| AnnotationError::Io { path: path.display().to_string(), source })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_annotation(&id, &text)
}

/// Write the canonical form followed by a newline, atomically.
pub fn write_annotation_file(path: &Path, annotation: &DrawingAnnotation) -> Result<(), AnnotationError> {
    let mut text = serialize_annotation(annotation);
    text.push('\n');
    fsutil::write_atomic(path, text.as_bytes())
        .map_err(|source| AnnotationError::Io { path: path.display().to_string(), source })
}

/// Number of drawings per entry count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntryCountHistogram {
    pub counts: BTreeMap<usize, usize>,
}

impl EntryCountHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, entry_count: usize) -> usize {
        self.counts.get(&entry_count).copied().unwrap_or(0)
    }
}

pub fn entry_count_histogram<'a, I>(annotations: I) -> EntryCountHistogram
where
    I: IntoIterator<Item = &'a DrawingAnnotation>,
{
    let mut counts = BTreeMap::new();
    for a in annotations {
        *counts.entry(a.entry_count()).or_insert(0) += 1;
    }
    EntryCountHistogram { counts }
}

/// Every value in `annotation` is a fixed point of normalization.
pub fn is_normalized(annotation: &DrawingAnnotation) -> bool {
    annotation.fcfs.iter().all(|f| {
        normalize_field_value(&f.tolerance, FieldKind::Tolerance).as_deref() == Ok(f.tolerance.as_str())
            && f.datums.iter().all(|d| normalize_field_value(d, FieldKind::Datum).as_deref() == Ok(d.as_str()))
    })
}
