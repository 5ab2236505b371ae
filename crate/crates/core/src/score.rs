//! Exact-match scoring of predicted against ground-truth key-value pairs.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::model::{flatten_pairs, frame_pairs, DrawingAnnotation, PairMultiset};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchCounts {
    pub const fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl Add for MatchCounts {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Precision, recall, F1 and hallucination rate, each a fraction in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hallucination: f64,
}

/// tp/(tp+fp) style ratio, with 0/0 taken as 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn hallucination_rate(precision: f64) -> f64 {
    1.0 - precision
}

/// Metrics from counts. Nothing predicted and nothing expected counts as
/// perfect agreement; any other 0/0 ratio is 0.
pub fn compute_metrics(c: MatchCounts) -> Metrics {
    if c == MatchCounts::default() {
        return Metrics { precision: 1.0, recall: 1.0, f1: 1.0, hallucination: 0.0 };
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Metrics { precision, recall, f1: f1_score(precision, recall), hallucination: hallucination_rate(precision) }
}

/// Multiset intersection counts between two pair multisets.
pub fn match_pairs(pred: &PairMultiset, gt: &PairMultiset) -> MatchCounts {
    let tp: usize = pred.iter().map(|(pair, n)| n.min(gt.count(pair))).sum();
    MatchCounts::new(tp as u64, (pred.len() - tp) as u64, (gt.len() - tp) as u64)
}

/// Pairs pooled per drawing: a predicted pair may match a ground-truth pair
/// from any frame.
pub fn match_counts(pred: &DrawingAnnotation, gt: &DrawingAnnotation) -> MatchCounts {
    match_pairs(&flatten_pairs(pred), &flatten_pairs(gt))
}

fn frame_overlap(a: &crate::model::FeatureControlFrame, b: &crate::model::FeatureControlFrame) -> i64 {
    let pa: PairMultiset = frame_pairs(a).into_iter().collect();
    let pb: PairMultiset = frame_pairs(b).into_iter().collect();
    match_pairs(&pa, &pb).tp as i64
}

/// Frame-level matching: each predicted frame is paired with at most one
/// ground-truth frame (maximum total pair overlap), and only pairs within
/// matched frames count as true positives.
pub fn match_counts_strict(pred: &DrawingAnnotation, gt: &DrawingAnnotation) -> MatchCounts {
    let n_pred = flatten_pairs(pred).len() as u64;
    let n_gt = flatten_pairs(gt).len() as u64;
    let weights: Vec<Vec<i64>> =
        pred.fcfs.iter().map(|p| gt.fcfs.iter().map(|g| frame_overlap(p, g)).collect()).collect();
    let tp = max_weight_assignment(&weights) as u64;
    MatchCounts::new(tp, n_pred - tp, n_gt - tp)
}

/// Maximum total weight of a matching in a non-negative rectangular weight
/// matrix (Hungarian algorithm on the padded square cost matrix).
fn max_weight_assignment(weights: &[Vec<i64>]) -> i64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return 0;
    }
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0);
    let cost = |i: usize, j: usize| -> i64 {
        let w = if i < rows && j < cols { weights[i][j] } else { 0 };
        max_w - w
    };

    // 1-indexed potentials formulation.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).filter(|&j| p[j] != 0 && p[j] - 1 < rows && j - 1 < cols).map(|j| weights[p[j] - 1][j - 1]).sum()
}

/// Sum counts across drawings, then compute metrics.
pub fn aggregate_micro<'a, I>(per_image: I) -> Metrics
where
    I: IntoIterator<Item = &'a MatchCounts>,
{
    compute_metrics(per_image.into_iter().copied().sum())
}

/// Mean of per-drawing metrics. Not used for headline numbers; kept for
/// comparison with the micro average.
pub fn aggregate_macro<'a, I>(per_image: I) -> Option<Metrics>
where
    I: IntoIterator<Item = &'a MatchCounts>,
{
    let all: Vec<Metrics> = per_image.into_iter().map(|c| compute_metrics(*c)).collect();
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Some(Metrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        hallucination: mean(|m| m.hallucination),
    })
}

/// Entry-count bucket: exact counts below the overflow threshold, and one
/// bucket for everything at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryBucket {
    pub lower: usize,
    pub overflow: bool,
}

impl EntryBucket {
    pub fn of(entry_count: usize, overflow_at: usize) -> Self {
        if entry_count >= overflow_at {
            Self { lower: overflow_at, overflow: true }
        } else {
            Self { lower: entry_count, overflow: false }
        }
    }

    pub fn label(&self) -> String {
        if self.overflow {
            format!("{}+", self.lower)
        } else {
            self.lower.to_string()
        }
    }
}

pub const DEFAULT_OVERFLOW_AT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub counts: MatchCounts,
    pub metrics: Metrics,
    pub n_images: usize,
}

/// Micro-aggregate drawings grouped by ground-truth entry count. Empty
/// buckets are omitted.
pub fn stratify_by_entry_count<'a, I>(per_image: I, overflow_at: usize) -> BTreeMap<EntryBucket, Stratum>
where
    I: IntoIterator<Item = &'a (usize, MatchCounts)>,
{
    let mut groups: BTreeMap<EntryBucket, (MatchCounts, usize)> = BTreeMap::new();
    for (entries, counts) in per_image {
        let slot = groups.entry(EntryBucket::of(*entries, overflow_at)).or_default();
        slot.0 += *counts;
        slot.1 += 1;
    }
    groups
        .into_iter()
        .map(|(bucket, (counts, n_images))| (bucket, Stratum { counts, metrics: compute_metrics(counts), n_images }))
        .collect()
}

/// One line of a per-image score file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageScore {
    pub record_id: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub gt_count: usize,
}

impl ImageScore {
    pub fn new(record_id: impl Into<String>, counts: MatchCounts, gt_count: usize) -> Self {
        Self { record_id: record_id.into(), tp: counts.tp, fp: counts.fp, fn_: counts.fn_, gt_count }
    }

    pub fn counts(&self) -> MatchCounts {
        MatchCounts::new(self.tp, self.fp, self.fn_)
    }
}

pub fn scores_to_jsonl(scores: &[ImageScore]) -> String {
    scores.iter().map(|s| serde_json::to_string(s).expect("scores serialize") + "\n").collect()
}

pub fn parse_scores_jsonl(text: &str) -> Result<Vec<ImageScore>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
