//! GD&T domain types: the characteristic symbol table, field normalization,
//! feature control frame validation and key-value pair flattening.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown GD&T symbol: {0:?}")]
    UnknownSymbol(String),
    #[error("value is empty after normalization")]
    EmptyValue,
}

/// One of the 14 geometric characteristics of ASME Y14.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometricCharacteristic {
    Straightness,
    Flatness,
    Circularity,
    Cylindricity,
    ProfileOfALine,
    ProfileOfASurface,
    Angularity,
    Perpendicularity,
    Parallelism,
    Position,
    Concentricity,
    Symmetry,
    CircularRunout,
    TotalRunout,
}

impl GeometricCharacteristic {
    pub const ALL: [GeometricCharacteristic; 14] = [
        Self::Straightness,
        Self::Flatness,
        Self::Circularity,
        Self::Cylindricity,
        Self::ProfileOfALine,
        Self::ProfileOfASurface,
        Self::Angularity,
        Self::Perpendicularity,
        Self::Parallelism,
        Self::Position,
        Self::Concentricity,
        Self::Symmetry,
        Self::CircularRunout,
        Self::TotalRunout,
    ];

    pub const fn codepoint(self) -> char {
        match self {
            Self::Straightness => '\u{23E4}',
            Self::Flatness => '\u{23E5}',
            Self::Circularity => '\u{25CB}',
            Self::Cylindricity => '\u{232D}',
            Self::ProfileOfALine => '\u{2312}',
            Self::ProfileOfASurface => '\u{2313}',
            Self::Angularity => '\u{2220}',
            Self::Perpendicularity => '\u{27C2}',
            Self::Parallelism => '\u{2225}',
            Self::Position => '\u{2316}',
            Self::Concentricity => '\u{25CE}',
            Self::Symmetry => '\u{232F}',
            Self::CircularRunout => '\u{2197}',
            Self::TotalRunout => '\u{2330}',
        }
    }

    pub const fn display_name(self) -> &'static str {
        match self {
            Self::Straightness => "straightness",
            Self::Flatness => "flatness",
            Self::Circularity => "circularity",
            Self::Cylindricity => "cylindricity",
            Self::ProfileOfALine => "profile of a line",
            Self::ProfileOfASurface => "profile of a surface",
            Self::Angularity => "angularity",
            Self::Perpendicularity => "perpendicularity",
            Self::Parallelism => "parallelism",
            Self::Position => "position",
            Self::Concentricity => "concentricity",
            Self::Symmetry => "symmetry",
            Self::CircularRunout => "circular runout",
            Self::TotalRunout => "total runout",
        }
    }

    /// The canonical glyph as a one-character string.
    pub fn glyph(self) -> String {
        self.codepoint().to_string()
    }
}

impl fmt::Display for GeometricCharacteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Alternative glyphs seen in drawings and model output, mapped to their
/// characteristic. None of these collide with a canonical codepoint.
pub const SYMBOL_ALIASES: &[(&str, GeometricCharacteristic)] = &[
    ("\u{22A5}", GeometricCharacteristic::Perpendicularity), // ⊥
    ("\u{2016}", GeometricCharacteristic::Parallelism),      // ‖
    ("\u{2AFD}", GeometricCharacteristic::Parallelism),      // ⫽
    ("//", GeometricCharacteristic::Parallelism),
    ("\u{25EF}", GeometricCharacteristic::Circularity),    // ◯
    ("\u{26AA}", GeometricCharacteristic::Circularity),    // ⚪
    ("\u{29BE}", GeometricCharacteristic::Concentricity),  // ⦾
    ("\u{2299}", GeometricCharacteristic::Concentricity),  // ⊙
    ("\u{2221}", GeometricCharacteristic::Angularity),     // ∡
    ("\u{2295}", GeometricCharacteristic::Position),       // ⊕
    ("\u{2A01}", GeometricCharacteristic::Position),       // ⨁
    ("\u{2261}", GeometricCharacteristic::Symmetry),       // ≡
    ("\u{279A}", GeometricCharacteristic::CircularRunout), // ➚
    ("\u{2197}\u{2197}", GeometricCharacteristic::TotalRunout),
    ("\u{25B1}", GeometricCharacteristic::Flatness),          // ▱
    ("\u{2322}", GeometricCharacteristic::ProfileOfALine),    // ⌢
    ("\u{25E0}", GeometricCharacteristic::ProfileOfASurface), // ◠
];

/// Spelled-out names beyond the display names. Matched after name folding
/// (lowercase, `-`/`_` to space, whitespace collapsed).
const NAME_ALIASES: &[(&str, GeometricCharacteristic)] = &[
    ("roundness", GeometricCharacteristic::Circularity),
    ("true position", GeometricCharacteristic::Position),
    ("line profile", GeometricCharacteristic::ProfileOfALine),
    ("profile of line", GeometricCharacteristic::ProfileOfALine),
    ("surface profile", GeometricCharacteristic::ProfileOfASurface),
    ("profile of surface", GeometricCharacteristic::ProfileOfASurface),
    ("perpendicular", GeometricCharacteristic::Perpendicularity),
    ("squareness", GeometricCharacteristic::Perpendicularity),
    ("parallel", GeometricCharacteristic::Parallelism),
    ("coaxiality", GeometricCharacteristic::Concentricity),
    ("runout", GeometricCharacteristic::CircularRunout),
];

/// Diameter-mark variants folded to U+2300 (⌀).
pub const DIAMETER_ALIASES: &[char] = &['\u{00D8}', '\u{00F8}', '\u{2205}'];
pub const DIAMETER_MARK: char = '\u{2300}';

/// Material-condition modifier spellings folded to enclosed letters.
pub const MODIFIER_ALIASES: &[(&str, char)] = &[
    ("(M)", '\u{24C2}'),
    ("(L)", '\u{24C1}'),
    ("(S)", '\u{24C8}'),
    ("\u{24DC}", '\u{24C2}'), // ⓜ
    ("\u{24DB}", '\u{24C1}'), // ⓛ
    ("\u{24E2}", '\u{24C8}'), // ⓢ
];
pub const MODIFIERS: [char; 3] = ['\u{24C2}', '\u{24C1}', '\u{24C8}'];

/// Which GD&T key a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Characteristic,
    Tolerance,
    Datum,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [Self::Characteristic, Self::Tolerance, Self::Datum];

    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Characteristic => "characteristic",
            Self::Tolerance => "tolerance",
            Self::Datum => "datum",
        }
    }
}

fn is_variation_selector(c: char) -> bool {
    matches!(c, '\u{FE00}'..='\u{FE0F}')
}

fn fold_fullwidth(c: char) -> char {
    match c {
        '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFF01 + 0x21).unwrap_or(c),
        '\u{3000}' => ' ',
        _ => c,
    }
}

/// Shared front end: drop variation selectors, fold fullwidth ASCII, NFC.
fn prepare(raw: &str) -> String {
    raw.chars().filter(|c| !is_variation_selector(*c)).map(fold_fullwidth).nfc().collect()
}

fn fold_name(s: &str) -> String {
    s.to_lowercase().replace(['-', '_'], " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Resolve a glyph, alias glyph or case-insensitive name to its characteristic.
pub fn canonical_symbol(raw: &str) -> Result<GeometricCharacteristic, ModelError> {
    let prepared = prepare(raw);
    let trimmed = prepared.trim();
    let compact: String = trimmed.chars().filter(|c| !c.is_whitespace()).collect();

    for c in GeometricCharacteristic::ALL {
        let mut buf = [0u8; 4];
        if compact == *c.codepoint().encode_utf8(&mut buf) {
            return Ok(c);
        }
    }
    if let Some((_, c)) = SYMBOL_ALIASES.iter().find(|(alias, _)| *alias == compact) {
        return Ok(*c);
    }

    let name = fold_name(trimmed);
    GeometricCharacteristic::ALL
        .into_iter()
        .find(|c| c.display_name() == name)
        .or_else(|| NAME_ALIASES.iter().find(|(alias, _)| *alias == name).map(|(_, c)| *c))
        .ok_or_else(|| ModelError::UnknownSymbol(raw.to_string()))
}

fn fold_marks(s: &str) -> String {
    let mut out: String = s.chars().map(|c| if DIAMETER_ALIASES.contains(&c) { DIAMETER_MARK } else { c }).collect();
    for (alias, modifier) in MODIFIER_ALIASES {
        if out.contains(alias) {
            out = out.replace(alias, &modifier.to_string());
        }
    }
    out
}

fn normalize_once(raw: &str, kind: FieldKind) -> String {
    let prepared = prepare(raw);
    match kind {
        FieldKind::Tolerance | FieldKind::Datum => {
            let compact: String = prepared.chars().filter(|c| !c.is_whitespace()).collect();
            fold_marks(&compact).nfc().collect()
        }
        FieldKind::Characteristic => prepared.trim().to_string(),
    }
}

/// Bring a raw field value into the normal form exact matching operates on.
///
/// Tolerance and datum values lose all whitespace and have diameter and
/// modifier spellings folded; characteristic values become the canonical glyph.
/// The result is a fixed point of this function.
pub fn normalize_field_value(raw: &str, kind: FieldKind) -> Result<String, ModelError> {
    if kind == FieldKind::Characteristic {
        return canonical_symbol(raw).map(GeometricCharacteristic::glyph);
    }
    // Whitespace removal, folding and composition can expose each other, so
    // iterate to the fixed point.
    let mut current = normalize_once(raw, kind);
    for _ in 0..8 {
        let next = normalize_once(&current, kind);
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        return Err(ModelError::EmptyValue);
    }
    Ok(current)
}

/// One GD&T callout.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureControlFrame {
    pub characteristic: GeometricCharacteristic,
    pub tolerance: String,
    /// Datum labels in precedence order.
    pub datums: Vec<String>,
}

impl FeatureControlFrame {
    /// Build a frame from raw text, normalizing tolerance and datum labels.
    /// Empty datum labels are skipped.
    pub fn new<S: AsRef<str>>(
        characteristic: GeometricCharacteristic,
        tolerance: &str,
        datums: &[S],
    ) -> Result<Self, ModelError> {
        let tolerance = normalize_field_value(tolerance, FieldKind::Tolerance)?;
        let datums = datums
            .iter()
            .filter_map(|d| match normalize_field_value(d.as_ref(), FieldKind::Datum) {
                Ok(v) => Some(Ok(v)),
                Err(ModelError::EmptyValue) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { characteristic, tolerance, datums })
    }

    /// Datum labels joined with `|`, empty when there are none.
    pub fn joined_datums(&self) -> String {
        self.datums.join("|")
    }
}

/// All frames of one drawing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawingAnnotation {
    pub drawing_id: String,
    pub fcfs: Vec<FeatureControlFrame>,
}

impl DrawingAnnotation {
    pub fn new(drawing_id: impl Into<String>, fcfs: Vec<FeatureControlFrame>) -> Self {
        Self { drawing_id: drawing_id.into(), fcfs }
    }

    pub fn empty(drawing_id: impl Into<String>) -> Self {
        Self::new(drawing_id, Vec::new())
    }

    pub fn entry_count(&self) -> usize {
        self.fcfs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeyValuePair {
    pub key: FieldKind,
    pub value: String,
}

impl KeyValuePair {
    pub fn new(key: FieldKind, value: impl Into<String>) -> Self {
        Self { key, value: value.into() }
    }
}

/// Multiset of key-value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairMultiset {
    counts: BTreeMap<KeyValuePair, usize>,
    len: usize,
}

impl PairMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: KeyValuePair) {
        *self.counts.entry(pair).or_insert(0) += 1;
        self.len += 1;
    }

    pub fn count(&self, pair: &KeyValuePair) -> usize {
        self.counts.get(pair).copied().unwrap_or(0)
    }

    /// Total number of pairs, counting duplicates.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Distinct pairs with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&KeyValuePair, usize)> {
        self.counts.iter().map(|(k, v)| (k, *v))
    }
}

impl FromIterator<KeyValuePair> for PairMultiset {
    fn from_iter<I: IntoIterator<Item = KeyValuePair>>(iter: I) -> Self {
        let mut set = Self::new();
        for pair in iter {
            set.insert(pair);
        }
        set
    }
}

/// Pairs contributed by one frame, in key order.
pub fn frame_pairs(fcf: &FeatureControlFrame) -> Vec<KeyValuePair> {
    let mut pairs = vec![
        KeyValuePair::new(FieldKind::Characteristic, fcf.characteristic.glyph()),
        KeyValuePair::new(FieldKind::Tolerance, fcf.tolerance.clone()),
    ];
    if !fcf.datums.is_empty() {
        pairs.push(KeyValuePair::new(FieldKind::Datum, fcf.joined_datums()));
    }
    pairs
}

pub fn flatten_pairs(annotation: &DrawingAnnotation) -> PairMultiset {
    annotation.fcfs.iter().flat_map(frame_pairs).collect()
}

/// A failed frame invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    EmptyTolerance,
    UnnormalizedTolerance,
    BadDatumLabel { index: usize, label: String },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyTolerance => "EMPTY_TOLERANCE",
            Self::UnnormalizedTolerance => "UNNORMALIZED_TOLERANCE",
            Self::BadDatumLabel { .. } => "BAD_DATUM_LABEL",
        }
    }
}

/// `A`, `B`Ⓜ, `A-B`: single uppercase letters, `-` for composite datums,
/// optional trailing modifier.
fn is_valid_datum_label(label: &str) -> bool {
    let body = match label.chars().last() {
        Some(c) if MODIFIERS.contains(&c) => &label[..label.len() - c.len_utf8()],
        _ => label,
    };
    !body.is_empty() && body.split('-').all(|part| part.len() == 1 && part.chars().all(|c| c.is_ascii_uppercase()))
}

pub fn validate_fcf(fcf: &FeatureControlFrame) -> Vec<Violation> {
    let mut violations = Vec::new();
    if fcf.tolerance.is_empty() {
        violations.push(Violation::EmptyTolerance);
    } else if normalize_field_value(&fcf.tolerance, FieldKind::Tolerance).as_deref() != Ok(fcf.tolerance.as_str()) {
        violations.push(Violation::UnnormalizedTolerance);
    }
    for (index, label) in fcf.datums.iter().enumerate() {
        if !is_valid_datum_label(label) {
            violations.push(Violation::BadDatumLabel { index, label: label.clone() });
        }
    }
    violations
}
