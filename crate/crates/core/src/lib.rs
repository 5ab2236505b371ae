//! Core library for benchmarking GD&T extraction from 2D engineering drawings.
//!
//! - [`model`]: characteristic symbol table, value normalization, key-value pairs
//! - [`annotation`] and [`manifest`]: annotation JSON and dataset CSV formats
//! - [`dataset`]: manifest assembly, query augmentation, train/validation splits
//! - [`repair`]: turning raw model text into normalized annotations
//! - [`score`]: exact-match counting and precision/recall/F1/hallucination
//! - [`report`]: baseline comparison tables and figure data

pub mod annotation;
pub mod dataset;
pub mod fsutil;
pub mod manifest;
pub mod model;
pub mod repair;
pub mod report;
pub mod score;

pub use annotation::{parse_annotation, serialize_annotation, EntryCountHistogram};
pub use manifest::ManifestRecord;
pub use model::{
    canonical_symbol, flatten_pairs, normalize_field_value, DrawingAnnotation, FeatureControlFrame, FieldKind,
    GeometricCharacteristic, KeyValuePair,
};
pub use score::{compute_metrics, match_counts, MatchCounts, Metrics};
