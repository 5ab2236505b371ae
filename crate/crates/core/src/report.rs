//! Baseline comparison tables and figure data.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::EntryCountHistogram;
use crate::score::{EntryBucket, Metrics, Stratum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("baseline value is zero")]
    ZeroBaseline,
    #[error("no baseline run in the report")]
    NoBaseline,
    #[error("duplicate run name {0:?}")]
    DuplicateRunName(String),
}

/// Round half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// A fraction as a percentage rounded to two decimals.
pub fn percent(fraction: f64) -> f64 {
    round2(fraction * 100.0)
}

/// Signed change of `value` relative to `baseline`, in percent, rounded to
/// two decimals.
pub fn relative_change(value: f64, baseline: f64) -> Result<f64, ReportError> {
    if baseline == 0.0 {
        return Err(ReportError::ZeroBaseline);
    }
    Ok(round2(100.0 * (value - baseline) / baseline))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
    Hallucination,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [Self::Precision, Self::Recall, Self::F1, Self::Hallucination];

    pub fn name(self) -> &'static str {
        match self {
            Self::Precision => "precision",
            Self::Recall => "recall",
            Self::F1 => "f1",
            Self::Hallucination => "hallucination",
        }
    }

    pub fn of(self, m: &Metrics) -> f64 {
        match self {
            Self::Precision => m.precision,
            Self::Recall => m.recall,
            Self::F1 => m.f1,
            Self::Hallucination => m.hallucination,
        }
    }

    /// Hallucination is the only metric where lower is better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Self::Hallucination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_name: String,
    pub metrics: Metrics,
    #[serde(default)]
    pub strata: BTreeMap<EntryBucket, Stratum>,
    pub is_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    /// Percentage, two decimals.
    pub value: f64,
    /// Relative change against the best baseline; baselines carry none.
    pub delta: Option<f64>,
    /// This cell is the best baseline value for its metric.
    pub best_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub run_name: String,
    pub is_baseline: bool,
    pub cells: [Cell; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    /// Best baseline percentage per metric, in [`MetricKind::ALL`] order.
    pub best_baseline: [f64; 4],
    pub rows: Vec<TableRow>,
}

/// Build a table of percentages where every non-baseline cell carries its
/// change relative to the best baseline for that metric (maximum for
/// precision, recall and F1, minimum for hallucination). Deltas are computed
/// from the displayed two-decimal percentages. Rows keep input order.
pub fn comparison_table(runs: &[RunResult]) -> Result<ComparisonTable, ReportError> {
    let mut names = HashSet::new();
    for r in runs {
        if !names.insert(r.run_name.as_str()) {
            return Err(ReportError::DuplicateRunName(r.run_name.clone()));
        }
    }
    let baselines: Vec<&RunResult> = runs.iter().filter(|r| r.is_baseline).collect();
    if baselines.is_empty() {
        return Err(ReportError::NoBaseline);
    }

    let mut best = [0.0; 4];
    for (slot, kind) in best.iter_mut().zip(MetricKind::ALL) {
        let values = baselines.iter().map(|r| percent(kind.of(&r.metrics)));
        *slot = if kind.higher_is_better() {
            values.fold(f64::NEG_INFINITY, f64::max)
        } else {
            values.fold(f64::INFINITY, f64::min)
        };
    }

    let rows = runs
        .iter()
        .map(|run| {
            let cell = |i: usize| -> Result<Cell, ReportError> {
                let value = percent(MetricKind::ALL[i].of(&run.metrics));
                let delta = if run.is_baseline { None } else { Some(relative_change(value, best[i])?) };
                Ok(Cell { value, delta, best_baseline: run.is_baseline && value == best[i] })
            };
            Ok(TableRow {
                run_name: run.run_name.clone(),
                is_baseline: run.is_baseline,
                cells: [cell(0)?, cell(1)?, cell(2)?, cell(3)?],
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    Ok(ComparisonTable { best_baseline: best, rows })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("CSV output is UTF-8")
}

fn fmt_delta(d: f64) -> String {
    format!("{d:+.2}")
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        let mut header = vec!["model".to_string(), "baseline".to_string()];
        for kind in MetricKind::ALL {
            header.push(kind.name().to_string());
            header.push(format!("{}_delta", kind.name()));
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.run_name.clone(), row.is_baseline.to_string()];
            for cell in &row.cells {
                rec.push(format!("{:.2}", cell.value));
                rec.push(cell.delta.map(fmt_delta).unwrap_or_default());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        finish(w)
    }

    /// Aligned plain text. Best baseline cells are marked with `*`.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
            .chain(["Precision (%)", "Recall (%)", "F1 score (%)", "Hallucination (%)"].map(String::from))
            .collect()];
        for row in &self.rows {
            let mut line = vec![row.run_name.clone()];
            for cell in &row.cells {
                let mut s = format!("{:.2}", cell.value);
                if cell.best_baseline {
                    s.push('*');
                }
                if let Some(d) = cell.delta {
                    s.push_str(&format!(" ({}%)", fmt_delta(d)));
                }
                line.push(s);
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..5).map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| {
                    let pad = w - s.chars().count();
                    if c == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

/// `entry_count,drawings` rows in ascending entry count.
pub fn histogram_csv(histogram: &EntryCountHistogram) -> String {
    let mut w = csv_writer();
    w.write_record(["entry_count", "drawings"]).expect("in-memory write");
    for (count, drawings) in &histogram.counts {
        w.write_record([count.to_string(), drawings.to_string()]).expect("in-memory write");
    }
    finish(w)
}

/// `entry_count,precision,recall,f1,hallucination,n_images` rows in ascending
/// bucket order, metrics as two-decimal percentages.
pub fn strata_csv(strata: &BTreeMap<EntryBucket, Stratum>) -> String {
    let mut w = csv_writer();
    w.write_record(["entry_count", "precision", "recall", "f1", "hallucination", "n_images"]).expect("in-memory write");
    for (bucket, s) in strata {
        let m = &s.metrics;
        w.write_record([
            bucket.label(),
            format!("{:.2}", percent(m.precision)),
            format!("{:.2}", percent(m.recall)),
            format!("{:.2}", percent(m.f1)),
            format!("{:.2}", percent(m.hallucination)),
            s.n_images.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}
