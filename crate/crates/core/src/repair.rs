//! Raw model text to normalized annotation: JSON block extraction,
//! deterministic syntax repair and prediction normalization.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotation::raw_entry;
use crate::model::{canonical_symbol, DrawingAnnotation, FeatureControlFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("no JSON array or object found in model output")]
    NoJsonFound,
    #[error("prediction is not a JSON array")]
    NotAnArray,
}

/// Names of the stages recorded in [`RepairReport::stage_applied`].
pub mod stage {
    pub const EXTRACT: &str = "extract_json_block";
    pub const SMART_QUOTES: &str = "smart_quotes";
    pub const TRAILING_COMMAS: &str = "trailing_commas";
    pub const SINGLE_QUOTES: &str = "single_quotes";
    pub const PARSE: &str = "parse";
    pub const NORMALIZE: &str = "normalize";
    pub const LLM_REPAIR: &str = "llm_repair";
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub stage_applied: Vec<String>,
    pub parse_ok: bool,
    pub dropped_entries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn strip_fences(text: &str) -> String {
    text.lines().filter(|line| !line.trim_start().starts_with("```")).collect::<Vec<_>>().join("\n")
}

/// End offset (exclusive) of the balanced structure opening at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut stack: Vec<char> = Vec::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (offset, c) in text[start..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '[' => stack.push(']'),
            '{' => stack.push('}'),
            ']' | '}' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(start + offset + c.len_utf8());
                }
            }
            _ => {}
        }
    }
    None
}

/// The first balanced top-level JSON array or object in `text`, verbatim,
/// after removing markdown fence lines. Quoted spans are skipped while
/// balancing brackets.
pub fn extract_json_block(text: &str) -> Result<String, RepairError> {
    let body = strip_fences(text);
    body.char_indices()
        .filter(|(_, c)| *c == '[' || *c == '{')
        .find_map(|(start, _)| balanced_end(&body, start).map(|end| body[start..end].to_string()))
        .ok_or(RepairError::NoJsonFound)
}

fn fold_smart_quotes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => '"',
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => '\'',
            _ => c,
        })
        .collect()
}

/// Drop commas that are followed (after whitespace) by `]` or `}`.
fn remove_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if let Some(q) = quote {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => {
                quote = Some(c);
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some(']') | Some('}')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Convert `'...'` spans outside double-quoted strings to JSON strings when the
/// span sits in a key/value position: the opening quote follows `[ { , :` (or
/// the start) and the closing quote precedes `: , ] }` (or the end).
fn convert_single_quotes(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut in_double = false;
    let mut escaped = false;
    while i < chars.len() {
        let c = chars[i];
        if in_double {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_double = true;
            out.push(c);
            i += 1;
            continue;
        }
        if c == '\'' {
            let before_ok = matches!(
                out.chars().rev().find(|c| !c.is_whitespace()),
                None | Some('[') | Some('{') | Some(',') | Some(':')
            );
            let close = chars[i + 1..].iter().position(|&c| c == '\'').map(|p| i + 1 + p);
            if let (true, Some(close)) = (before_ok, close) {
                let after_ok = matches!(
                    chars[close + 1..].iter().find(|c| !c.is_whitespace()),
                    None | Some(':') | Some(',') | Some(']') | Some('}')
                );
                if after_ok {
                    let inner: String = chars[i + 1..close].iter().collect();
                    out.push('"');
                    for ch in inner.chars() {
                        if ch == '"' {
                            out.push('\\');
                        }
                        out.push(ch);
                    }
                    out.push('"');
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn parses(text: &str) -> bool {
    serde_json::from_str::<Value>(text).is_ok()
}

type Step = (&'static str, fn(&str) -> String);

/// Like [`deterministic_repair`], also naming the steps that changed the text.
pub fn deterministic_repair_steps(text: &str) -> (String, Vec<&'static str>) {
    if parses(text) {
        return (text.to_string(), Vec::new());
    }
    let steps: [Step; 3] = [
        (stage::SMART_QUOTES, fold_smart_quotes),
        (stage::TRAILING_COMMAS, remove_trailing_commas),
        (stage::SINGLE_QUOTES, convert_single_quotes),
    ];
    let mut current = text.to_string();
    let mut applied = Vec::new();
    // The quote rule can unlock a different reading on a second pass; run the
    // pipeline to its fixed point so the repair is idempotent.
    for _ in 0..8 {
        let before = current.clone();
        for (name, step) in steps {
            if parses(&current) {
                break;
            }
            let next = step(&current);
            if next != current {
                if !applied.contains(&name) {
                    applied.push(name);
                }
                current = next;
            }
        }
        if current == before || parses(&current) {
            break;
        }
    }
    (current, applied)
}

/// Fix common syntax slips in model JSON: smart quotes, trailing commas and
/// single-quoted strings, in that order. Text that already parses is returned
/// unchanged; text that cannot be fixed is returned best-effort.
pub fn deterministic_repair(text: &str) -> String {
    deterministic_repair_steps(text).0
}

/// Fold key synonyms and value spellings into a normalized annotation.
///
/// Entries without a recognizable characteristic or without a tolerance are
/// dropped and counted; the order of kept entries is preserved.
pub fn normalize_prediction(
    drawing_id: &str,
    parsed: &Value,
) -> Result<(DrawingAnnotation, RepairReport), RepairError> {
    let Value::Array(items) = parsed else {
        return Err(RepairError::NotAnArray);
    };
    let mut fcfs = Vec::new();
    let mut dropped = 0;
    for item in items {
        let frame = match item {
            Value::Object(obj) => raw_entry(obj).ok().and_then(|entry| {
                let characteristic = canonical_symbol(entry.characteristic.as_deref()?).ok()?;
                // Unusable datum labels are skipped rather than sinking the frame.
                let datums: Vec<String> = entry
                    .datums
                    .iter()
                    .filter(|d| FeatureControlFrame::new(characteristic, "0", &[d.as_str()]).is_ok())
                    .cloned()
                    .collect();
                FeatureControlFrame::new(characteristic, entry.tolerance.as_deref()?, &datums).ok()
            }),
            _ => None,
        };
        match frame {
            Some(f) => fcfs.push(f),
            None => dropped += 1,
        }
    }
    let report = RepairReport {
        stage_applied: vec![stage::NORMALIZE.to_string()],
        parse_ok: true,
        dropped_entries: dropped,
        error: None,
    };
    Ok((DrawingAnnotation::new(drawing_id, fcfs), report))
}

/// Result of running the deterministic pipeline on one raw output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairOutcome {
    pub annotation: DrawingAnnotation,
    pub report: RepairReport,
}

/// extract → deterministic repair → parse → normalize.
///
/// Failures yield an empty annotation with `parse_ok = false`, so the record
/// scores as an empty prediction.
pub fn repair_output(drawing_id: &str, raw: &str) -> RepairOutcome {
    let mut stages = Vec::new();
    let failed = |stages: Vec<String>, error: String| RepairOutcome {
        annotation: DrawingAnnotation::empty(drawing_id),
        report: RepairReport { stage_applied: stages, parse_ok: false, dropped_entries: 0, error: Some(error) },
    };

    let block = match extract_json_block(raw) {
        Ok(b) => b,
        Err(e) => return failed(stages, e.to_string()),
    };
    stages.push(stage::EXTRACT.to_string());

    let (repaired, steps) = deterministic_repair_steps(&block);
    stages.extend(steps.iter().map(|s| s.to_string()));

    let value: Value = match serde_json::from_str(&repaired) {
        Ok(v) => v,
        Err(e) => return failed(stages, format!("unparseable after repair: {e}")),
    };
    stages.push(stage::PARSE.to_string());

    match normalize_prediction(drawing_id, &value) {
        Ok((annotation, mut report)) => {
            stages.append(&mut report.stage_applied);
            report.stage_applied = stages;
            RepairOutcome { annotation, report }
        }
        Err(e) => failed(stages, e.to_string()),
    }
}
