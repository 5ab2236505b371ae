//! Acceptance suite: one line per criterion, nonzero exit if any fails.

#[path = "../common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use base64::Engine;
use gdtbench_client::client::raw_output_path;
use gdtbench_client::stub::{StubReply, StubServer};
use gdtbench_client::{build_request, ApiStyle, ClientError, EndpointConfig, VlmClient};
use gdtbench_core::annotation::{parse_annotation, serialize_annotation};
use gdtbench_core::dataset::{
    augment_queries, split_train_val, QueriesPerImage, QueryTemplatePool, SplitSpec, PNG_SIGNATURE,
};
use gdtbench_core::manifest::{manifest_to_string, parse_manifest, read_manifest, write_manifest};
use gdtbench_core::model::PairMultiset;
use gdtbench_core::model::{
    canonical_symbol, normalize_field_value, FieldKind, GeometricCharacteristic as G, DIAMETER_ALIASES, DIAMETER_MARK,
    MODIFIERS, MODIFIER_ALIASES, SYMBOL_ALIASES,
};
use gdtbench_core::report::{comparison_table, relative_change, MetricKind, RunResult};
use gdtbench_core::score::{compute_metrics, match_counts, match_pairs, MatchCounts, Metrics};
use gdtbench_core::{DrawingAnnotation, FeatureControlFrame, KeyValuePair, ManifestRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// (model, [P, R, F1, H], deltas printed for non-baselines)
type PublishedRow = (&'static str, [f64; 4], Option<[f64; 4]>);

// Published benchmark results, as printed.
const PUBLISHED: [PublishedRow; 5] = [
    ("GPT-4o", [59.03, 25.39, 35.51, 40.97], None),
    ("Claude-3.5-Sonnet", [44.01, 37.27, 40.36, 55.99], None),
    ("Florence-2 (Exp-1)", [60.75, 32.33, 42.20, 39.25], Some([2.91, -13.25, 4.56, -4.19])),
    ("Florence-2 (Exp-2)", [71.74, 38.28, 49.92, 28.26], Some([21.53, 2.71, 23.69, -31.02])),
    ("Florence-2 (Exp-3)", [76.71, 51.34, 61.51, 23.29], Some([29.95, 37.75, 52.40, -43.15])),
];

fn hundredths(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut worst_h: f64 = 0.0;
    let mut worst_f1: f64 = 0.0;
    for (name, [p, r, f1, h], _) in PUBLISHED {
        let dh = (h - (100.0 - p)).abs();
        check!(dh <= 0.005 + 1e-9, "{name}: hallucination {h} vs 100 - {p}");
        let hm = 2.0 * p * r / (p + r);
        let df = (f1 - hm).abs();
        check!(df <= 0.01, "{name}: F1 {f1} vs harmonic mean {hm:.4}");
        // Same identities through the metric code, on fractions.
        let m = compute_metrics_from_pr(p / 100.0, r / 100.0);
        check!((m.hallucination * 100.0 - (100.0 - p)).abs() <= 0.005, "{name}: hallucination_rate");
        check!((m.f1 * 100.0 - f1).abs() <= 0.01, "{name}: f1_score {}", m.f1 * 100.0);
        worst_h = worst_h.max(dh);
        worst_f1 = worst_f1.max(df);
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("5 rows; max |H-(100-P)| = {worst_h:.4}, max |F1-hm| = {worst_f1:.4}; {elapsed:?}"))
}

fn compute_metrics_from_pr(p: f64, r: f64) -> Metrics {
    let f1 = gdtbench_core::score::f1_score(p, r);
    Metrics { precision: p, recall: r, f1, hallucination: gdtbench_core::score::hallucination_rate(p) }
}

fn ac2() -> Outcome {
    let runs: Vec<RunResult> = PUBLISHED
        .iter()
        .map(|(name, v, deltas)| RunResult {
            run_name: name.to_string(),
            metrics: Metrics {
                precision: v[0] / 100.0,
                recall: v[1] / 100.0,
                f1: v[2] / 100.0,
                hallucination: v[3] / 100.0,
            },
            strata: BTreeMap::new(),
            is_baseline: deltas.is_none(),
        })
        .collect();
    let table = comparison_table(&runs).map_err(|e| e.to_string())?;
    check!(table.best_baseline == [59.03, 37.27, 40.36, 40.97], "best baselines {:?}", table.best_baseline);
    let mut checked = 0;
    let mut notes = Vec::new();
    for ((name, _, deltas), row) in PUBLISHED.iter().zip(&table.rows) {
        let Some(expected) = deltas else { continue };
        for (i, kind) in MetricKind::ALL.into_iter().enumerate() {
            let got = row.cells[i].delta.ok_or(format!("{name}: no delta"))?;
            let diff = (hundredths(got) - hundredths(expected[i])).abs();
            check!(diff <= 1, "{name} {}: {got:+.2} vs {:+.2}", kind.name(), expected[i]);
            if diff != 0 {
                notes.push(format!("{name} {} {got:+.2} vs printed {:+.2}", kind.name(), expected[i]));
            }
            checked += 1;
        }
    }
    check!(checked == 12, "checked {checked} deltas");
    check!(relative_change(76.71, 59.03) == Ok(29.95), "relative_change(76.71, 59.03)");
    let note = if notes.is_empty() { String::new() } else { format!("; off by 0.01: {}", notes.join(", ")) };
    Ok(format!("12 deltas within 0.01{note}"))
}

const TOLERANCES: [&str; 8] = ["0.01", "0.02", "0.05", "0.1", "⌀0.05", "⌀0.1Ⓜ", "0.2Ⓛ", "⌀0.25Ⓢ"];
const DATUMS: [&str; 6] = ["A", "B", "C", "D", "A-B", "BⓂ"];

fn random_annotation(rng: &mut ChaCha8Rng, id: &str, max_entries: usize) -> DrawingAnnotation {
    let n = rng.random_range(0..=max_entries);
    let fcfs = (0..n)
        .map(|_| {
            let c = *G::ALL.choose(rng).unwrap();
            let tol = *TOLERANCES.choose(rng).unwrap();
            let nd = rng.random_range(0..=3);
            let datums: Vec<&str> = (0..nd).map(|_| *DATUMS.choose(rng).unwrap()).collect();
            FeatureControlFrame::new(c, tol, &datums).unwrap()
        })
        .collect();
    DrawingAnnotation::new(id, fcfs)
}

fn to_frames(a: &DrawingAnnotation) -> Vec<common::Frame> {
    a.fcfs
        .iter()
        .map(|f| common::Frame {
            characteristic: f.characteristic.codepoint().to_string(),
            tolerance: f.tolerance.clone(),
            datum: f.datums.join("|"),
        })
        .collect()
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 2000;
    let mut nonzero_tp = 0;
    for t in 0..trials {
        let gt = random_annotation(&mut rng, "g", 14);
        // Half the time, derive pred from gt so matches are frequent.
        let pred = if rng.random_bool(0.5) {
            let mut fcfs: Vec<FeatureControlFrame> = gt.fcfs.iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
            fcfs.extend(random_annotation(&mut rng, "p", 4).fcfs);
            DrawingAnnotation::new("p", fcfs)
        } else {
            random_annotation(&mut rng, "p", 14)
        };
        let got = match_counts(&pred, &gt);
        let (tp, fp, fn_) = common::brute_counts(&to_frames(&pred), &to_frames(&gt));
        check!(got == MatchCounts::new(tp, fp, fn_), "trial {t}: {got:?} vs oracle ({tp},{fp},{fn_})");
        if tp > 0 {
            nonzero_tp += 1;
        }
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{trials} random pairs equal the brute-force oracle ({nonzero_tp} with tp > 0); {elapsed:?}"))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let keys = FieldKind::ALL;
    for t in 0..200 {
        let n = rng.random_range(0..=30usize);
        let k = rng.random_range(0..=n);
        let s = rng.random_range(0..=n - k);
        let i = rng.random_range(0..=10usize);
        let gt_pairs: Vec<KeyValuePair> =
            (0..n).map(|j| KeyValuePair::new(keys[j % 3], format!("gt-{t}-{j}"))).collect();
        let mut pred: Vec<KeyValuePair> = gt_pairs[..k].to_vec();
        pred.extend(gt_pairs[k..k + s].iter().map(|p| KeyValuePair::new(p.key, format!("{}-substituted", p.value))));
        pred.extend((0..i).map(|j| KeyValuePair::new(keys[j % 3], format!("spurious-{t}-{j}"))));
        let gt: PairMultiset = gt_pairs.into_iter().collect();
        let pred: PairMultiset = pred.into_iter().collect();

        let counts = match_pairs(&pred, &gt);
        let expected = MatchCounts::new(k as u64, (s + i) as u64, (n - k) as u64);
        check!(counts == expected, "(n,k,s,i)=({n},{k},{s},{i}): {counts:?}");

        let m = compute_metrics(counts);
        let closed = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let (p, r) = if n == 0 && s + i == 0 { (1.0, 1.0) } else { (closed(k, k + s + i), closed(k, n)) };
        check!((m.precision - p).abs() < 1e-12, "(n,k,s,i)=({n},{k},{s},{i}): P {} vs {p}", m.precision);
        check!((m.recall - r).abs() < 1e-12, "(n,k,s,i)=({n},{k},{s},{i}): R {} vs {r}", m.recall);
    }
    Ok("200 (n,k,s,i) configurations match tp=k, fp=s+i, fn=n-k and closed-form P, R".into())
}

const FIELD_CHARS: [&str; 18] =
    ["a", "Z", "é", ",", "\"", "'", " ", "\n", "\r\n", "|", "#", "/", "Ø", "⌖", "x y", "„", "\t", "日本"];

fn random_field(rng: &mut ChaCha8Rng, allow_empty: bool) -> String {
    let lo = if allow_empty { 0 } else { 1 };
    let len = rng.random_range(lo..=8);
    let mut s: String = (0..len).map(|_| *FIELD_CHARS.choose(rng).unwrap()).collect();
    if !allow_empty && s.is_empty() {
        s.push('x');
    }
    s
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..500 {
        let a = random_annotation(&mut rng, &format!("d{t}"), 14);
        let text = serialize_annotation(&a);
        let back = parse_annotation(&a.drawing_id, &text).map_err(|e| format!("annotation {t}: {e}"))?;
        check!(back == a, "annotation {t} does not round-trip:\n{text}");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut quoted = 0;
    for t in 0..100 {
        let n = rng.random_range(0..=12);
        let records: Vec<ManifestRecord> = (0..n)
            .map(|j| ManifestRecord {
                record_id: format!("{}-{j}", random_field(&mut rng, false)),
                image_path: PathBuf::from(random_field(&mut rng, false)),
                query: random_field(&mut rng, true),
                annotation_path: PathBuf::from(random_field(&mut rng, false)),
            })
            .collect();
        let text = manifest_to_string(&records).map_err(|e| e.to_string())?;
        if text.contains('"') {
            quoted += 1;
        }
        let back = parse_manifest(&text).map_err(|e| format!("manifest {t}: {e}\n{text}"))?;
        check!(back == records, "manifest {t} does not round-trip:\n{text}");
        check!(manifest_to_string(&back).map_err(|e| e.to_string())? == text, "manifest {t}: text differs");

        let path = dir.path().join(format!("m{t}.csv"));
        write_manifest(&records, &path).map_err(|e| e.to_string())?;
        check!(read_manifest(&path).map_err(|e| e.to_string())? == records, "manifest {t}: file round-trip");
    }
    check!(quoted > 50, "only {quoted} manifests exercised quoting");
    Ok(format!("500 annotations and 100 manifests round-trip ({quoted} with quoted fields)"))
}

const FUZZ_ATOMS: [&str; 30] = [
    " ", "\t", "\u{3000}", "0", ".", "1", "5", "⌀", "Ø", "ø", "∅", "(M)", "(L)", "(S)", "Ⓜ", "ⓜ", "ⓛ", "ⓢ", "A", "-",
    "|", "e", "\u{0301}", "\u{FE0F}", "\u{FE0E}", "０", "Ａ", "O", "\u{0338}", "(",
];

fn ac6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut normalized = 0;
    for t in 0..10_000 {
        let len = rng.random_range(0..=10);
        let raw: String = (0..len).map(|_| *FUZZ_ATOMS.choose(&mut rng).unwrap()).collect();
        for kind in [FieldKind::Tolerance, FieldKind::Datum] {
            if let Ok(once) = normalize_field_value(&raw, kind) {
                let twice = normalize_field_value(&once, kind).map_err(|e| format!("{t}: {e}"))?;
                check!(once == twice, "{t}: not idempotent on {raw:?}: {once:?} -> {twice:?}");
                normalized += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for t in 0..1000 {
        let c = *G::ALL.choose(&mut rng).unwrap();
        let pad = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { " " } else { "" };
        let raw = format!("{}{}{}", pad(&mut rng), c.glyph(), pad(&mut rng));
        let once = normalize_field_value(&raw, FieldKind::Characteristic).map_err(|e| format!("{t}: {e}"))?;
        check!(normalize_field_value(&once, FieldKind::Characteristic).as_ref() == Ok(&once), "{t}: {raw:?}");
    }

    for (alias, c) in SYMBOL_ALIASES {
        check!(canonical_symbol(alias) == Ok(*c), "symbol alias {alias:?}");
    }
    for c in G::ALL {
        check!(canonical_symbol(&c.glyph()) == Ok(c), "glyph of {c}");
        check!(canonical_symbol(c.display_name()) == Ok(c), "name of {c}");
        check!(
            normalize_field_value(&c.glyph(), FieldKind::Characteristic).as_deref() == Ok(c.glyph().as_str()),
            "{c} glyph is not a fixed point"
        );
    }
    for alias in DIAMETER_ALIASES {
        let got = normalize_field_value(&format!("{alias}0.1"), FieldKind::Tolerance);
        check!(got == Ok(format!("{DIAMETER_MARK}0.1")), "diameter alias {alias:?}: {got:?}");
    }
    for (alias, modifier) in MODIFIER_ALIASES {
        let got = normalize_field_value(&format!("0.1{alias}"), FieldKind::Tolerance);
        check!(got == Ok(format!("0.1{modifier}")), "modifier alias {alias:?}: {got:?}");
    }
    for canonical in [DIAMETER_MARK.to_string()].into_iter().chain(MODIFIERS.iter().map(|m| m.to_string())) {
        let v = format!("0.2{canonical}");
        check!(normalize_field_value(&v, FieldKind::Tolerance).as_ref() == Ok(&v), "{v:?} is not a fixed point");
    }
    Ok(format!(
        "10,000 fuzzed inputs idempotent ({normalized} normalizable field values); {} symbol, {} diameter, {} modifier aliases fold",
        SYMBOL_ALIASES.len(),
        DIAMETER_ALIASES.len(),
        MODIFIER_ALIASES.len()
    ))
}

fn base_records(n: usize) -> Vec<ManifestRecord> {
    (0..n)
        .map(|i| ManifestRecord {
            record_id: format!("drawing_{i:03}"),
            image_path: PathBuf::from(format!("images/drawing_{i:03}.png")),
            query: String::new(),
            annotation_path: PathBuf::from(format!("annotations/drawing_{i:03}.json")),
        })
        .collect()
}

fn ac7() -> Outcome {
    let records = base_records(400);
    let spec = SplitSpec { train_fraction: 0.8, seed: 42, stratify: false };
    let split = split_train_val(&records, &spec, None).map_err(|e| e.to_string())?;
    check!((split.train.len(), split.val.len()) == (320, 80), "{} / {}", split.train.len(), split.val.len());
    let again = split_train_val(&records, &spec, None).map_err(|e| e.to_string())?;
    check!(again == split, "same seed gave a different partition");
    let other = split_train_val(&records, &SplitSpec { seed: 43, ..spec }, None).map_err(|e| e.to_string())?;
    check!(other != split, "different seeds gave the same partition");

    let pool = QueryTemplatePool::default();
    let q4 = QueriesPerImage::try_from(4).map_err(|e| e.to_string())?;
    let augmented = augment_queries(&records, q4, &pool, 7).map_err(|e| e.to_string())?;
    check!(augmented.len() == 1600, "x4 augmentation gave {}", augmented.len());
    check!(
        augmented == augment_queries(&records, q4, &pool, 7).map_err(|e| e.to_string())?,
        "augment not deterministic"
    );
    let pairs: HashSet<(&str, &str)> = augmented.iter().map(|r| (r.base_id(), r.query.as_str())).collect();
    check!(pairs.len() == 1600, "duplicated (drawing, query) pairs");

    let asplit = split_train_val(&augmented, &spec, None).map_err(|e| e.to_string())?;
    let train: HashSet<&str> = asplit.train.iter().map(|r| r.base_id()).collect();
    let val: HashSet<&str> = asplit.val.iter().map(|r| r.base_id()).collect();
    check!(train.is_disjoint(&val), "augmented records of one drawing straddle the split");
    check!((asplit.train.len(), asplit.val.len()) == (1280, 320), "{} / {}", asplit.train.len(), asplit.val.len());

    let counts: HashMap<String, usize> =
        records.iter().enumerate().map(|(i, r)| (r.record_id.clone(), i % 15)).collect();
    let strat =
        split_train_val(&records, &SplitSpec { stratify: true, ..spec }, Some(&counts)).map_err(|e| e.to_string())?;
    check!((strat.train.len(), strat.val.len()) == (320, 80), "stratified {} / {}", strat.train.len(), strat.val.len());
    Ok("400 -> 320/80; seeded determinism; x4 -> 1600 with no straddling (1280/320)".into())
}

fn png(tag: u16) -> Vec<u8> {
    let mut v = PNG_SIGNATURE.to_vec();
    v.extend_from_slice(&tag.to_be_bytes());
    v
}

fn stub_endpoint(url: &str, concurrency: usize) -> EndpointConfig {
    let mut e = EndpointConfig::new("stub", ApiStyle::OpenaiChat, url, "UNUSED", "stub-model");
    e.backoff_base_ms = 5;
    e.timeout = 10.0;
    e.max_concurrency = concurrency;
    e
}

fn ac8() -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let stub = StubServer::scripted(vec![StubReply::status(429), StubReply::openai_text("[]")])
            .await
            .map_err(|e| e.to_string())?;
        let client = VlmClient::with_api_key(stub_endpoint(&stub.url(), 4), "k").map_err(|e| e.to_string())?;
        let req = build_request(client.config(), "q", &png(0)).map_err(|e| e.to_string())?;
        let out = client.execute_with_retry("r", &req).await.map_err(|e| e.to_string())?;
        check!(out.attempt_count == 2, "429 then 200 gave attempt_count {}", out.attempt_count);

        let stub = StubServer::scripted(vec![StubReply::status(401)]).await.map_err(|e| e.to_string())?;
        let client = VlmClient::with_api_key(stub_endpoint(&stub.url(), 4), "k").map_err(|e| e.to_string())?;
        let req = build_request(client.config(), "q", &png(0)).map_err(|e| e.to_string())?;
        let res = client.execute_with_retry("r", &req).await;
        check!(matches!(res, Err(ClientError::AuthError { status: 401 })), "401 gave {res:?}");
        check!(stub.requests() == 1, "401 was retried: {} requests", stub.requests());

        let concurrency = 4;
        let stub = StubServer::start(|_, _| StubReply::openai_text("[]"), Duration::from_millis(15))
            .await
            .map_err(|e| e.to_string())?;
        let client =
            VlmClient::with_api_key(stub_endpoint(&stub.url(), concurrency), "k").map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut records = base_records(100);
        for (i, r) in records.iter_mut().enumerate() {
            r.image_path = dir.path().join(format!("{i}.png"));
            std::fs::write(&r.image_path, png(i as u16)).map_err(|e| e.to_string())?;
        }
        let out_dir = dir.path().join("raw");
        let summary = client.run_batch(&records, &out_dir).await.map_err(|e| e.to_string())?;
        check!(summary.succeeded == 100, "batch: {summary:?}");
        let peak = stub.max_in_flight();
        check!(peak <= concurrency, "peak in-flight {peak} > {concurrency}");
        check!(records.iter().all(|r| raw_output_path(&out_dir, &r.record_id).exists()), "missing raw outputs");

        let before = stub.requests();
        let rerun = client.run_batch(&records, &out_dir).await.map_err(|e| e.to_string())?;
        check!(stub.requests() == before, "rerun made {} calls", stub.requests() - before);
        check!(rerun.skipped == 100, "rerun skipped {}", rerun.skipped);
        Ok(format!("429->200 in 2 attempts; 401 sent once; peak in-flight {peak}/{concurrency}; rerun made 0 calls"))
    })
}

fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gdtbench"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("gdtbench {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("UTF-8 temp path")
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn ac9() -> Outcome {
    let fixture = common::fixture_dir();
    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(common::expected_path()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;

    // The stub recognizes each drawing by its base64 image and replays the
    // canned output for it.
    let mut replies = HashMap::new();
    for id in common::fixture_drawings() {
        let image = std::fs::read(fixture.join("images").join(format!("{id}.png"))).map_err(|e| e.to_string())?;
        let data = base64::engine::general_purpose::STANDARD.encode(image);
        let canned =
            std::fs::read_to_string(fixture.join("canned").join(format!("{id}.txt"))).map_err(|e| e.to_string())?;
        replies.insert(format!("data:image/png;base64,{data}"), canned);
    }

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let stub = rt
        .block_on(StubServer::start(
            move |_, body| {
                let url = body["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap_or_default();
                match replies.get(url) {
                    Some(text) => StubReply::openai_text(text),
                    None => StubReply::status(400),
                }
            },
            Duration::ZERO,
        ))
        .map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let config = serde_json::json!({"endpoints": [{
        "name": "fixture-model", "style": "openai-chat", "base_url": stub.url(),
        "api_key_env": "GDTB_FIXTURE_KEY", "model": "fixture", "backoff_base_ms": 5, "max_concurrency": 3,
    }]});
    std::fs::write(d.join("config.json"), config.to_string()).map_err(|e| e.to_string())?;
    let env = [("GDTB_FIXTURE_KEY", "not-a-real-key")];

    let (images, annotations) = (fixture.join("images"), fixture.join("annotations"));
    let (manifest, aug, raw) = (d.join("manifest.csv"), d.join("aug.csv"), d.join("raw"));
    run_cli(&["build-manifest", "--images", p(&images), "--annotations", p(&annotations), "--out", p(&manifest)], &[])?;
    run_cli(&["augment", "--manifest", p(&manifest), "--queries", "1", "--seed", "9", "--out", p(&aug)], &[])?;
    run_cli(
        &[
            "infer",
            "--manifest",
            p(&aug),
            "--endpoint",
            "fixture-model",
            "--config",
            p(&d.join("config.json")),
            "--out-dir",
            p(&raw),
        ],
        &env,
    )?;
    check!(stub.requests() == 10, "infer made {} requests", stub.requests());
    run_cli(&["repair", "--in-dir", p(&raw)], &[])?;
    let scores = d.join("fixture-model.jsonl");
    run_cli(&["score", "--manifest", p(&aug), "--pred-dir", p(&raw), "--out", p(&scores)], &[])?;
    let baseline = d.join("baseline.jsonl");
    std::fs::copy(fixture.join("baseline.jsonl"), &baseline).map_err(|e| e.to_string())?;
    let report = d.join("report.csv");
    run_cli(&["report", "--scores", p(&baseline), p(&scores), "--baselines", "baseline", "--out", p(&report)], &[])?;

    let lines = std::fs::read_to_string(&scores).map_err(|e| e.to_string())?;
    let mut total = [0u64; 3];
    let mut n = 0;
    for line in lines.lines() {
        let s: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let id = s["record_id"].as_str().unwrap_or_default();
        let base = id.split('#').next().unwrap_or_default();
        let want = &expected["per_record"][base];
        for k in ["tp", "fp", "fn", "gt_count"] {
            check!(s[k] == want[k], "{id} {k}: {} vs expected {}", s[k], want[k]);
        }
        for (slot, k) in total.iter_mut().zip(["tp", "fp", "fn"]) {
            *slot += s[k].as_u64().unwrap_or_default();
        }
        n += 1;
    }
    check!(n == 10, "{n} score lines");
    let want_total = &expected["total"];
    check!(
        [want_total["tp"].as_u64(), want_total["fp"].as_u64(), want_total["fn"].as_u64()]
            == [Some(total[0]), Some(total[1]), Some(total[2])],
        "totals {total:?} vs {want_total}"
    );

    let rows = csv_rows(&std::fs::read_to_string(&report).map_err(|e| e.to_string())?);
    let run_row = rows.iter().find(|r| r[0] == "fixture-model").ok_or("no run row in report")?;
    let base_row = rows.iter().find(|r| r[0] == "baseline").ok_or("no baseline row in report")?;
    let strs = |v: &Value| -> Vec<String> {
        v.as_array().map(|a| a.iter().map(|x| x.as_str().unwrap_or_default().to_string()).collect()).unwrap_or_default()
    };
    let (run_pct, base_pct, deltas) =
        (strs(&expected["run_percent"]), strs(&expected["baseline_percent"]), strs(&expected["deltas"]));
    for i in 0..4 {
        check!(run_row[2 + 2 * i] == run_pct[i], "run metric {i}: {} vs {}", run_row[2 + 2 * i], run_pct[i]);
        check!(run_row[3 + 2 * i] == deltas[i], "delta {i}: {} vs {}", run_row[3 + 2 * i], deltas[i]);
        check!(base_row[2 + 2 * i] == base_pct[i], "baseline metric {i}: {} vs {}", base_row[2 + 2 * i], base_pct[i]);
    }

    let strata_text = std::fs::read_to_string(d.join("report.fixture-model.strata.csv")).map_err(|e| e.to_string())?;
    let strata_rows = csv_rows(&strata_text);
    let want_strata: Vec<Vec<String>> =
        expected["strata"].as_array().map(|a| a.iter().map(strs).collect()).unwrap_or_default();
    check!(strata_rows[1..] == want_strata[..], "strata {strata_rows:?} vs {want_strata:?}");

    Ok(format!(
        "10 drawings via stub: tp/fp/fn = {}/{}/{}; P/R/F1/H = {}",
        total[0],
        total[1],
        total[2],
        run_pct.join("/")
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1", "published table internal consistency", ac1),
        ("AC2", "published delta reproduction", ac2),
        ("AC3", "scorer vs brute-force oracle", ac3),
        ("AC4", "perturbation closed form", ac4),
        ("AC5", "annotation and manifest round-trips", ac5),
        ("AC6", "normalization properties", ac6),
        ("AC7", "split and augmentation determinism", ac7),
        ("AC8", "client against local stub", ac8),
        ("AC9", "end-to-end fixture dry run", ac9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, title, run) in criteria {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(payload) => Err(payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({ms} ms)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {why} ({ms} ms)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
