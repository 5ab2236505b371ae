use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use gdtbench_client::client::RAW_SUFFIX;
use gdtbench_client::repair::repair_with_llm;
use gdtbench_client::{ClientConfig, VlmClient};
use gdtbench_core::annotation::{entry_count_histogram, parse_annotation, read_annotation_file, write_annotation_file};
use gdtbench_core::dataset::{self, QueriesPerImage, QueryTemplatePool, SplitSpec};
use gdtbench_core::fsutil::write_atomic;
use gdtbench_core::manifest::{read_manifest, write_manifest};
use gdtbench_core::report::{comparison_table, histogram_csv, strata_csv, RunResult};
use gdtbench_core::score::{
    aggregate_macro, aggregate_micro, match_counts, match_counts_strict, parse_scores_jsonl, scores_to_jsonl,
    stratify_by_entry_count, ImageScore, MatchCounts, DEFAULT_OVERFLOW_AT,
};
use gdtbench_core::{DrawingAnnotation, ManifestRecord};
use serde_json::json;

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting async runtime")
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

pub fn build_manifest(images: &Path, annotations: &Path, out: &Path) -> Result<()> {
    let records = dataset::build_manifest(images, annotations)?;
    write_manifest(&records, out)?;
    log::info!("{} records written to {}", records.len(), out.display());
    println!("{}", records.len());
    Ok(())
}

pub fn augment(manifest: &Path, queries: usize, pool: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let records = load_manifest(manifest)?;
    let pool = match pool {
        Some(p) => QueryTemplatePool::load(p)?,
        None => QueryTemplatePool::default(),
    };
    let q = QueriesPerImage::try_from(queries)?;
    let augmented = dataset::augment_queries(&records, q, &pool, seed)?;
    write_manifest(&augmented, out)?;
    println!("{}", augmented.len());
    Ok(())
}

/// Ground-truth entry count per drawing, keyed by base id.
fn entry_counts(records: &[ManifestRecord]) -> Result<HashMap<String, usize>> {
    let mut counts = HashMap::new();
    for r in records {
        if counts.contains_key(r.base_id()) {
            continue;
        }
        let gt = read_annotation_file(&r.annotation_path)?;
        counts.insert(r.base_id().to_string(), gt.entry_count());
    }
    Ok(counts)
}

pub fn split(manifest: &Path, ratio: f64, seed: u64, stratify: bool, train: &Path, val: &Path) -> Result<()> {
    let records = load_manifest(manifest)?;
    let counts = if stratify { Some(entry_counts(&records)?) } else { None };
    let spec = SplitSpec { train_fraction: ratio, seed, stratify };
    let split = dataset::split_train_val(&records, &spec, counts.as_ref())?;
    write_manifest(&split.train, train)?;
    write_manifest(&split.val, val)?;
    println!("{}", json!({"train": split.train.len(), "val": split.val.len()}));
    Ok(())
}

pub fn stats(manifest: &Path, out: &Path) -> Result<()> {
    let records = load_manifest(manifest)?;
    let mut seen = HashSet::new();
    let mut annotations = Vec::new();
    for r in &records {
        if seen.insert(r.base_id()) {
            annotations.push(read_annotation_file(&r.annotation_path)?);
        }
    }
    let histogram = entry_count_histogram(&annotations);
    write_text(out, &histogram_csv(&histogram))?;
    println!("{}", serde_json::to_string(&histogram.counts)?);
    Ok(())
}

pub fn infer(manifest: &Path, endpoint: &str, config: &Path, out_dir: &Path) -> Result<()> {
    let mut records = load_manifest(manifest)?;
    let default_query = QueryTemplatePool::default().templates()[0].clone();
    for r in records.iter_mut().filter(|r| r.query.trim().is_empty()) {
        log::debug!("{}: empty query, using the default template", r.record_id);
        r.query = default_query.clone();
    }
    let config = ClientConfig::load(config)?;
    let client = VlmClient::from_env(config.endpoint(endpoint)?.clone())?;
    let summary = runtime()?.block_on(client.run_batch(&records, out_dir))?;
    println!("{}", serde_json::to_string(&summary)?);
    if !summary.failed.is_empty() {
        bail!("{} of {} records failed; rerun to retry them", summary.failed.len(), records.len());
    }
    Ok(())
}

fn raw_outputs(in_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(in_dir).with_context(|| format!("reading {}", in_dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(id) = name.strip_suffix(RAW_SUFFIX) {
            found.push((id.to_string(), path));
        }
    }
    found.sort();
    Ok(found)
}

pub fn repair(in_dir: &Path, llm_endpoint: Option<&str>, config: Option<&Path>) -> Result<()> {
    let client = match (llm_endpoint, config) {
        (Some(name), Some(cfg)) => Some(VlmClient::from_env(ClientConfig::load(cfg)?.endpoint(name)?.clone())?),
        (Some(_), None) => bail!("--llm-endpoint needs --config"),
        _ => None,
    };
    let rt = runtime()?;
    let (mut ok, mut failed, mut dropped) = (0usize, 0usize, 0usize);
    for (id, path) in raw_outputs(in_dir)? {
        let raw = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let outcome = match rt.block_on(repair_with_llm(client.as_ref(), &id, &raw)) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("{id}: model-assisted repair failed: {e}");
                let mut o = gdtbench_core::repair::repair_output(&id, &raw);
                o.report.error = Some(e.to_string());
                o
            }
        };
        if outcome.report.parse_ok {
            ok += 1;
        } else {
            log::warn!("{id}: {}", outcome.report.error.as_deref().unwrap_or("unparseable"));
            failed += 1;
        }
        dropped += outcome.report.dropped_entries;
        write_annotation_file(&in_dir.join(format!("{id}.json")), &outcome.annotation)?;
        let report = serde_json::to_string_pretty(&outcome.report)? + "\n";
        write_text(&in_dir.join(format!("{id}.repair.json")), &report)?;
    }
    println!("{}", json!({"parsed": ok, "unparseable": failed, "dropped_entries": dropped}));
    Ok(())
}

/// A missing prediction file scores as an empty prediction.
fn load_prediction(pred_dir: &Path, record_id: &str) -> Result<DrawingAnnotation> {
    let path = pred_dir.join(format!("{record_id}.json"));
    match std::fs::read_to_string(&path) {
        Ok(text) => parse_annotation(record_id, &text).with_context(|| format!("reading {}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{record_id}: no prediction at {}", path.display());
            Ok(DrawingAnnotation::empty(record_id))
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub fn score(manifest: &Path, pred_dir: &Path, out: &Path, strict_frames: bool) -> Result<()> {
    let records = load_manifest(manifest)?;
    let mut scores = Vec::with_capacity(records.len());
    for r in &records {
        let gt = read_annotation_file(&r.annotation_path)?;
        let pred = load_prediction(pred_dir, &r.record_id)?;
        let counts = if strict_frames { match_counts_strict(&pred, &gt) } else { match_counts(&pred, &gt) };
        scores.push(ImageScore::new(&r.record_id, counts, gt.entry_count()));
    }
    write_text(out, &scores_to_jsonl(&scores))?;
    let counts: Vec<MatchCounts> = scores.iter().map(ImageScore::counts).collect();
    let total: MatchCounts = counts.iter().copied().sum();
    let summary = json!({
        "records": scores.len(),
        "counts": total,
        "micro": aggregate_micro(&counts),
        "macro": aggregate_macro(&counts),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".jsonl").map(str::to_string).unwrap_or(name)
}

/// Strata CSV for `run` sits next to the report: `<report stem>.<run>.strata.csv`.
pub fn strata_path(report: &Path, run: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{stem}.{run}.strata.csv"))
}

pub fn report(score_files: &[PathBuf], baselines: &[String], out: &Path) -> Result<()> {
    let names: Vec<String> = score_files.iter().map(|p| run_name(p)).collect();
    for b in baselines {
        ensure!(names.contains(b), "baseline {b:?} is not among the score files ({})", names.join(", "));
    }
    let mut runs = Vec::new();
    for (path, name) in score_files.iter().zip(names) {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let scores = parse_scores_jsonl(&text).with_context(|| format!("parsing {}", path.display()))?;
        let per_image: Vec<(usize, MatchCounts)> = scores.iter().map(|s| (s.gt_count, s.counts())).collect();
        let metrics = aggregate_micro(per_image.iter().map(|(_, c)| c));
        let strata: BTreeMap<_, _> = stratify_by_entry_count(&per_image, DEFAULT_OVERFLOW_AT);
        runs.push(RunResult { is_baseline: baselines.contains(&name), run_name: name, metrics, strata });
    }
    let table = comparison_table(&runs)?;
    write_text(out, &table.to_csv())?;
    for run in &runs {
        write_text(&strata_path(out, &run.run_name), &strata_csv(&run.strata))?;
    }
    print!("{}", table.to_text());
    Ok(())
}
