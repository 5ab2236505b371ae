//! Manifest assembly, query augmentation and train/validation splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{KEY_CHARACTERISTIC, KEY_DATUM, KEY_TOLERANCE};
use crate::manifest::ManifestRecord;

pub const PNG_SIGNATURE: [u8; 8] = [0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0} is not a PNG file (bad signature)")]
    NotPng(PathBuf),
    #[error("no annotation file for image {0:?}")]
    MissingAnnotation(String),
    #[error("no PNG images in {0}")]
    EmptyDirectory(PathBuf),
    #[error("query pool has {available} templates, {requested} requested per image")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("invalid query pool: {0}")]
    InvalidPool(String),
    #[error("queries per image must be 1, 2 or 4, got {0}")]
    BadQueryCount(usize),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("cannot split an empty manifest")]
    EmptyInput,
    #[error("stratified split has no entry count for drawing {0:?}")]
    MissingStratum(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub fn has_png_signature(bytes: &[u8]) -> bool {
    bytes.len() >= PNG_SIGNATURE.len() && bytes[..8] == PNG_SIGNATURE
}

fn check_png_file(path: &Path) -> Result<(), DatasetError> {
    let mut head = [0u8; 8];
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut read = 0;
    while read < head.len() {
        match file.read(&mut head[read..]).map_err(io_err(path))? {
            0 => break,
            n => read += n,
        }
    }
    if has_png_signature(&head[..read]) {
        Ok(())
    } else {
        Err(DatasetError::NotPng(path.to_path_buf()))
    }
}

/// One record per `.png` in `image_dir` with a matching `<stem>.json` in
/// `annotation_dir`, sorted by record id. Queries start empty.
pub fn build_manifest(image_dir: &Path, annotation_dir: &Path) -> Result<Vec<ManifestRecord>, DatasetError> {
    let mut images = Vec::new();
    for entry in fs::read_dir(image_dir).map_err(io_err(image_dir))? {
        let path = entry.map_err(io_err(image_dir))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            images.push(path);
        }
    }
    if images.is_empty() {
        return Err(DatasetError::EmptyDirectory(image_dir.to_path_buf()));
    }

    let mut records = Vec::with_capacity(images.len());
    for image in images {
        let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        check_png_file(&image)?;
        let annotation = annotation_dir.join(format!("{stem}.json"));
        if !annotation.is_file() {
            return Err(DatasetError::MissingAnnotation(stem));
        }
        records.push(ManifestRecord {
            record_id: stem,
            image_path: image,
            query: String::new(),
            annotation_path: annotation,
        });
    }
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(records)
}

const DEFAULT_QUERIES: [&str; 4] = [
    "List every GD&T feature control frame in this drawing as a JSON array with keys geometric_characteristic, tolerance, datum.",
    "Extract all geometric tolerances from this engineering drawing. Return a JSON array of objects with keys geometric_characteristic, tolerance, datum, in drawing order.",
    "Identify each feature control frame shown in the drawing and report its geometric_characteristic symbol, tolerance value and datum references as a JSON array using the keys geometric_characteristic, tolerance, datum.",
    "What GD&T callouts appear in this drawing? Answer only with a JSON array where every element has the keys geometric_characteristic, tolerance and datum.",
];

/// Distinct query texts to pair with drawings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct QueryTemplatePool {
    templates: Vec<String>,
}

impl QueryTemplatePool {
    /// Templates must be non-empty, pairwise distinct, and each must name the
    /// three output keys.
    pub fn new(templates: Vec<String>) -> Result<Self, DatasetError> {
        if templates.is_empty() {
            return Err(DatasetError::InvalidPool("no templates".into()));
        }
        let mut seen = HashSet::new();
        for t in &templates {
            if !seen.insert(t.as_str()) {
                return Err(DatasetError::InvalidPool(format!("duplicate template {t:?}")));
            }
            for key in [KEY_CHARACTERISTIC, KEY_TOLERANCE, KEY_DATUM] {
                if !t.contains(key) {
                    return Err(DatasetError::InvalidPool(format!("template {t:?} does not mention `{key}`")));
                }
            }
        }
        Ok(Self { templates })
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let templates: Vec<String> =
            serde_json::from_str(text).map_err(|e| DatasetError::InvalidPool(e.to_string()))?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

impl Default for QueryTemplatePool {
    fn default() -> Self {
        Self::new(DEFAULT_QUERIES.iter().map(|s| s.to_string()).collect()).expect("default pool is valid")
    }
}

impl TryFrom<Vec<String>> for QueryTemplatePool {
    type Error = DatasetError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<QueryTemplatePool> for Vec<String> {
    fn from(p: QueryTemplatePool) -> Self {
        p.templates
    }
}

/// Queries per image: one, two or four.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueriesPerImage(usize);

impl QueriesPerImage {
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for QueriesPerImage {
    type Error = DatasetError;
    fn try_from(n: usize) -> Result<Self, Self::Error> {
        match n {
            1 | 2 | 4 => Ok(Self(n)),
            _ => Err(DatasetError::BadQueryCount(n)),
        }
    }
}

/// Expand each record into `queries_per_image` records with distinct
/// templates drawn by a seeded RNG. Derived ids are `<id>#q<j>`.
pub fn augment_queries(
    records: &[ManifestRecord],
    queries_per_image: QueriesPerImage,
    pool: &QueryTemplatePool,
    seed: u64,
) -> Result<Vec<ManifestRecord>, DatasetError> {
    let q = queries_per_image.get();
    if q > pool.len() {
        return Err(DatasetError::PoolTooSmall { requested: q, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records.len() * q);
    for record in records {
        let base = record.base_id();
        for (j, template) in index::sample(&mut rng, pool.len(), q).into_iter().enumerate() {
            out.push(ManifestRecord {
                record_id: format!("{base}#q{j}"),
                query: pool.templates()[template].clone(),
                ..record.clone()
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0, stratify: false }
    }
}

/// Records of the two split sides, each in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<ManifestRecord>,
    pub val: Vec<ManifestRecord>,
}

fn train_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Split records into train and validation sets at drawing granularity.
///
/// All records sharing a base id land on the same side, and the train side
/// receives `round(fraction * drawings)` drawings. With `spec.stratify`, drawings
/// are grouped by ground-truth entry count (`entry_counts`, keyed by base id)
/// and the train quota is apportioned across groups by largest remainder, so
/// every group is within one drawing of the target ratio.
pub fn split_train_val(
    records: &[ManifestRecord],
    spec: &SplitSpec,
    entry_counts: Option<&HashMap<String, usize>>,
) -> Result<Split, DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(spec.train_fraction));
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }

    let mut drawings: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for r in records {
        if seen.insert(r.base_id()) {
            drawings.push(r.base_id());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_ids: HashSet<&str> = if spec.stratify {
        let mut strata: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for &d in &drawings {
            let count = entry_counts
                .and_then(|m| m.get(d))
                .copied()
                .ok_or_else(|| DatasetError::MissingStratum(d.to_string()))?;
            strata.entry(count).or_default().push(d);
        }
        let quota = train_size(spec.train_fraction, drawings.len());
        let targets: Vec<f64> = strata.values().map(|v| spec.train_fraction * v.len() as f64).collect();
        let mut alloc: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
        let mut order: Vec<usize> = (0..alloc.len()).collect();
        order.shuffle(&mut rng);
        // Stable sort keeps the seeded order among equal remainders.
        order.sort_by(|&a, &b| {
            let ra = targets[a] - targets[a].floor();
            let rb = targets[b] - targets[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut remaining = quota.saturating_sub(alloc.iter().sum());
        for &i in &order {
            if remaining == 0 {
                break;
            }
            if alloc[i] < strata.values().nth(i).map_or(0, Vec::len) {
                alloc[i] += 1;
                remaining -= 1;
            }
        }
        let mut ids = HashSet::new();
        for (members, take) in strata.into_values().zip(alloc) {
            let mut members = members;
            members.shuffle(&mut rng);
            ids.extend(members.into_iter().take(take));
        }
        ids
    } else {
        let mut shuffled = drawings.clone();
        shuffled.shuffle(&mut rng);
        shuffled.into_iter().take(train_size(spec.train_fraction, drawings.len())).collect()
    };

    let (train, val) = records.iter().cloned().partition(|r| train_ids.contains(r.base_id()));
    Ok(Split { train, val })
}
