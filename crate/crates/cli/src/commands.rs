use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use serde_json::{json, Value};

use dualspace_core::affect::{aggregate_vad, density_map, per_emotion_summary, write_summary_table, Plane};
use dualspace_core::curation::{
    dedup as dedup_hashes, embedding_duplicates, filter_corpus, parse_embeddings, perceptual_hash, redundant_members,
    resolve_policy, sharpness_score, write_duplicate_list, QualityInput, Verdict, HASH_ALGORITHM,
};
use dualspace_core::interplay::{composition_by_emotion, correlation_matrix, write_composition_tsv};
use dualspace_core::loss::{evaluate, EvalFile, MetricReport};
use dualspace_core::perceptual::{extract_all, map_parallel, PerceptualFeatures, PixelImage};
use dualspace_core::review::{read_audit_log, read_snapshot, write_snapshot, ReviewQueue, SystemClock};
use dualspace_core::schema::{
    parse_record_for, scan_corpus, serialize_record, AnnotationRecord, CorpusEntry, CorpusScan, PROPORTION_DECIMALS,
};

use crate::context::{Context, Outcome};
use crate::{DedupArgs, MetricsArgs, ReplayArgs, ServeArgs, StatsArgs};

fn id(entry: &CorpusEntry) -> String {
    format!("{}/{}", entry.scene, entry.stem)
}

fn scan(ctx: &Context) -> Result<CorpusScan> {
    if !ctx.root.is_dir() {
        bail!("corpus root {} is not a directory", ctx.root.display());
    }
    Ok(scan_corpus(&ctx.root)?)
}

fn scan_problems(scan: &CorpusScan) -> Vec<String> {
    scan.errors.iter().map(|e| e.to_string()).collect()
}

fn load_record(entry: &CorpusEntry) -> Result<AnnotationRecord, String> {
    let raw = fs::read(&entry.json_path).map_err(|e| format!("{}: {e}", entry.json_path.display()))?;
    parse_record_for(&entry.stem, &raw).map_err(|e| format!("{}: {e}", entry.json_path.display()))
}

fn open_image(entry: &CorpusEntry) -> Result<PixelImage, String> {
    PixelImage::open(&entry.image_path).map_err(|e| format!("{}: {e}", entry.image_path.display()))
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

#[derive(Serialize)]
struct FeatureRow<'a> {
    scene: &'a str,
    stem: &'a str,
    #[serde(flatten)]
    features: PerceptualFeatures,
}

struct Extracted {
    features: PerceptualFeatures,
    bytes: Vec<u8>,
    changed: bool,
}

pub fn extract(ctx: &Context) -> Result<Outcome> {
    let scan = scan(ctx)?;
    let config = ctx.config.extraction()?;
    let results = map_parallel(&scan.pairs, ctx.workers(), |entry: &CorpusEntry| -> Result<Extracted, String> {
        let image = open_image(entry)?;
        let raw = fs::read(&entry.json_path).map_err(|e| format!("{}: {e}", entry.json_path.display()))?;
        let mut record =
            parse_record_for(&entry.stem, &raw).map_err(|e| format!("{}: {e}", entry.json_path.display()))?;
        let features = extract_all(&image, &config);
        record.color_proportion = features.color_proportion.rounded_preserving_sum(PROPORTION_DECIMALS);
        record.average_color = features.average_color;
        record.structural = features.structural;
        let bytes = serialize_record(&record).map_err(|e| format!("{}: {e}", entry.json_path.display()))?;
        Ok(Extracted {
            features,
            changed: bytes != raw,
            bytes,
        })
    })?;

    let mut errors = scan_problems(&scan);
    let mut rows = Vec::new();
    let mut changed = 0;
    for (entry, result) in scan.pairs.iter().zip(&results) {
        match result {
            Ok(x) => {
                rows.push(FeatureRow {
                    scene: &entry.scene,
                    stem: &entry.stem,
                    features: x.features,
                });
                if x.changed {
                    changed += 1;
                    if !ctx.dry_run {
                        if let Err(e) = write_atomic(&entry.json_path, &x.bytes) {
                            errors.push(format!("{}: {e}", entry.json_path.display()));
                        }
                    }
                }
            }
            Err(e) => errors.push(e.clone()),
        }
    }
    ctx.write_output("features.jsonl", &jsonl(&rows)?)?;
    let summary = json!({
        "pairs": scan.pairs.len(),
        "extracted": rows.len(),
        "json_changed": changed,
        "json_written": if ctx.dry_run { 0 } else { changed },
        "orphans": scan.orphans,
    });
    ctx.write_manifest(
        "extract",
        json!({ "workers": ctx.workers(), "extraction": config.manifest() }),
        &["features.jsonl".into()],
        summary,
        &errors,
    )?;
    println!(
        "extracted {} of {} images, {} JSON files {}",
        rows.len(),
        scan.pairs.len(),
        changed,
        if ctx.dry_run { "would change" } else { "updated" }
    );
    Ok(Outcome { errors })
}

pub fn validate(ctx: &Context) -> Result<Outcome> {
    let scan = scan(ctx)?;
    let mut violations = scan_problems(&scan);
    for o in &scan.orphans {
        violations.push(format!("{}: {:?} for {}/{}", o.path.display(), o.kind, o.scene, o.stem));
    }
    let results = map_parallel(&scan.pairs, ctx.workers(), load_record)?;
    violations.extend(results.into_iter().filter_map(Result::err));
    for v in &violations {
        println!("{v}");
    }
    println!("{} files checked, {} violations", scan.pairs.len(), violations.len());
    Ok(Outcome {
        errors: if violations.is_empty() {
            Vec::new()
        } else {
            vec![format!("{} violations", violations.len())]
        },
    })
}

pub fn filter(ctx: &Context) -> Result<Outcome> {
    let scan = scan(ctx)?;
    let results = map_parallel(&scan.pairs, ctx.workers(), |entry: &CorpusEntry| -> Result<QualityInput, String> {
        let record = load_record(entry)?;
        let image = open_image(entry)?;
        let sharpness = sharpness_score(&image).map_err(|e| format!("{}: {e}", entry.image_path.display()))?;
        let mut input = QualityInput::from_record(&record, sharpness);
        input.stem = id(entry);
        Ok(input)
    })?;
    let mut errors = scan_problems(&scan);
    let mut inputs = Vec::new();
    for r in results {
        match r {
            Ok(i) => inputs.push(i),
            Err(e) => errors.push(e),
        }
    }
    let spec = ctx.config.curation.policy();
    let policy = resolve_policy(&spec, &inputs)?;
    let reports = filter_corpus(&inputs, &policy)?;
    let dropped = reports.iter().filter(|r| r.verdict == Verdict::Drop).count();
    ctx.write_output("quality.jsonl", &jsonl(&reports)?)?;
    ctx.write_manifest(
        "filter",
        json!({ "workers": ctx.workers(), "resolved_policy": policy }),
        &["quality.jsonl".into()],
        json!({ "scored": reports.len(), "kept": reports.len() - dropped, "dropped": dropped }),
        &errors,
    )?;
    println!("{} scored, {} kept, {} dropped", reports.len(), reports.len() - dropped, dropped);
    Ok(Outcome { errors })
}

pub fn dedup(mut ctx: Context, args: &DedupArgs) -> Result<Outcome> {
    if let Some(t) = args.hamming_threshold {
        ctx.config.curation.hamming_threshold = t;
    }
    if let Some(t) = args.cosine_threshold {
        ctx.config.curation.cosine_threshold = t;
    }
    ctx.config.validate()?;
    let curation = ctx.config.curation.clone();

    if let Some(path) = &args.embeddings {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let clusters = embedding_duplicates(&parse_embeddings(&text)?, curation.cosine_threshold)?;
        let mut bytes = serde_json::to_vec_pretty(&clusters)?;
        bytes.push(b'\n');
        ctx.write_output("embedding_clusters.json", &bytes)?;
        ctx.write_manifest(
            "dedup",
            json!({ "mode": "embedding", "embeddings": path.display().to_string() }),
            &["embedding_clusters.json".into()],
            json!({ "clusters": clusters.len() }),
            &[],
        )?;
        println!("{} embedding clusters", clusters.len());
        return Ok(Outcome::default());
    }

    let scan = scan(&ctx)?;
    let results = map_parallel(&scan.pairs, ctx.workers(), |entry: &CorpusEntry| {
        open_image(entry).map(|img| (id(entry), perceptual_hash(&img)))
    })?;
    let mut errors = scan_problems(&scan);
    let mut hashes = Vec::new();
    for r in results {
        match r {
            Ok(h) => hashes.push(h),
            Err(e) => errors.push(e),
        }
    }
    let clusters = dedup_hashes(&hashes, curation.hamming_threshold)?;
    let redundant = redundant_members(&clusters);
    let mut tsv = b"representative\tmember\thamming\n".to_vec();
    write_duplicate_list(&mut tsv, &clusters, &hashes)?;
    let mut cluster_json = serde_json::to_vec_pretty(&clusters)?;
    cluster_json.push(b'\n');
    let hash_rows: Vec<Value> = hashes.iter().map(|(id, h)| json!({ "id": id, "hash": format!("{h:016x}") })).collect();
    ctx.write_output("duplicates.tsv", &tsv)?;
    ctx.write_output("clusters.json", &cluster_json)?;
    ctx.write_output("hashes.jsonl", &jsonl(&hash_rows)?)?;
    ctx.write_manifest(
        "dedup",
        json!({ "mode": "hash", "algorithm": HASH_ALGORITHM, "workers": ctx.workers() }),
        &["duplicates.tsv".into(), "clusters.json".into(), "hashes.jsonl".into()],
        json!({ "images": hashes.len(), "clusters": clusters.len(), "redundant": redundant.len() }),
        &errors,
    )?;
    println!("{} images, {} clusters, {} redundant", hashes.len(), clusters.len(), redundant.len());
    Ok(Outcome { errors })
}

pub fn stats(mut ctx: Context, args: &StatsArgs) -> Result<Outcome> {
    if let Some(b) = args.bins {
        ctx.config.stats.density_bins = b;
    }
    ctx.config.validate()?;
    let scan = scan(&ctx)?;
    let mut errors = scan_problems(&scan);
    let mut records = Vec::new();
    for r in map_parallel(&scan.pairs, ctx.workers(), load_record)? {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(e),
        }
    }
    let weights = &ctx.config.stats.aggregation;
    for r in &mut records {
        if let Ok(v) = aggregate_vad(&r.per_model_vad, weights) {
            r.aggregated_vad = Some(v);
        }
    }
    let bins = ctx.config.stats.density_bins;
    let sigma = ctx.config.stats.smoothing_sigma;
    let mut outputs = Vec::new();
    let mut by_emotion: BTreeMap<String, Vec<_>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in &records {
        if let Some(v) = r.effective_vad() {
            all.push(v);
            by_emotion.entry(r.emotion.to_string()).or_default().push(v);
        }
    }
    for plane in Plane::ALL {
        let grid = density_map(&all, plane, bins, sigma)?;
        let name = format!("density/all_{}.json", plane.as_str());
        ctx.write_output(&name, format!("{}\n", grid.to_json()).as_bytes())?;
        outputs.push(name);
        let png = format!("density/all_{}.png", plane.as_str());
        grid.write_heatmap_png(&ctx.out_dir()?.join(&png), args.heatmap_scale)?;
        outputs.push(png);
        for (emotion, points) in &by_emotion {
            let grid = density_map(points, plane, bins, sigma)?;
            let name = format!("density/{emotion}_{}.json", plane.as_str());
            ctx.write_output(&name, format!("{}\n", grid.to_json()).as_bytes())?;
            outputs.push(name);
        }
    }

    let mut summary_tsv = Vec::new();
    write_summary_table(&mut summary_tsv, &per_emotion_summary(&records))?;
    ctx.write_output("emotion_summary.tsv", &summary_tsv)?;
    let mut composition_tsv = Vec::new();
    write_composition_tsv(&mut composition_tsv, &composition_by_emotion(&records))?;
    ctx.write_output("composition.tsv", &composition_tsv)?;
    let matrix = correlation_matrix(&records);
    let mut correlation_tsv = Vec::new();
    matrix.write_tsv(&mut correlation_tsv)?;
    ctx.write_output("correlation.tsv", &correlation_tsv)?;
    outputs.extend(["emotion_summary.tsv", "composition.tsv", "correlation.tsv"].map(String::from));

    ctx.write_manifest(
        "stats",
        json!({ "density_bins": bins, "smoothing_sigma": sigma, "heatmap_scale": args.heatmap_scale }),
        &outputs,
        json!({ "records": records.len(), "with_vad": all.len(), "emotions": by_emotion.keys().collect::<Vec<_>>() }),
        &errors,
    )?;
    println!("{} records, {} with VAD, {} outputs", records.len(), all.len(), outputs.len());
    Ok(Outcome { errors })
}

fn read_eval(path: &Path) -> Result<EvalFile> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not an evaluation file", path.display()))
}

pub fn metrics(ctx: &Context, args: &MetricsArgs) -> Result<Outcome> {
    let target = read_eval(&args.target)?;
    let mut report = MetricReport::default();
    for path in &args.pred {
        let pred = read_eval(path)?;
        report.extend(evaluate(&pred, &target).with_context(|| format!("evaluating {}", path.display()))?);
    }
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv)?;
    let table = report.render_table();
    ctx.write_output("metrics.tsv", &tsv)?;
    ctx.write_output("metrics.md", table.as_bytes())?;
    let paths = |p: &[PathBuf]| p.iter().map(|x| x.display().to_string()).collect::<Vec<_>>();
    ctx.write_manifest(
        "metrics",
        json!({ "pred": paths(&args.pred), "target": args.target.display().to_string() }),
        &["metrics.tsv".into(), "metrics.md".into()],
        json!({ "rows": report.rows.len() }),
        &[],
    )?;
    print!("{table}");
    Ok(Outcome::default())
}

pub fn review_serve(ctx: &Context, args: &ServeArgs) -> Result<Outcome> {
    let out = ctx.out_dir()?;
    let audit_log = args.audit_log.clone().unwrap_or_else(|| out.join("audit.jsonl"));
    let snapshot = args.snapshot.clone().unwrap_or_else(|| out.join("queue_snapshot.json"));
    let cors = args
        .cors_origin
        .as_deref()
        .map(axum::http::HeaderValue::from_str)
        .transpose()
        .context("invalid --cors-origin")?;
    let boot = dualspace_service::bootstrap(&ctx.root, &audit_log, ctx.config.review, Arc::new(SystemClock))?;
    for stem in &boot.skipped {
        tracing::warn!("not queued: {stem}");
    }
    ctx.write_manifest(
        "review-serve",
        json!({
            "bind": args.bind.to_string(),
            "audit_log": audit_log.display().to_string(),
            "snapshot": snapshot.display().to_string(),
            "cors_origin": args.cors_origin,
        }),
        &[],
        json!({ "replayed": boot.replayed, "enqueued": boot.enqueued, "skipped": boot.skipped }),
        &[],
    )?;
    let service = Arc::new(boot.service.with_snapshot(&snapshot));
    let app = dualspace_service::router(service, cors);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .with_context(|| format!("cannot bind {}", args.bind))?;
        println!("review service listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(Outcome::default())
}

pub fn audit_replay(ctx: &Context, args: &ReplayArgs) -> Result<Outcome> {
    let entries = read_audit_log(&args.log)?;
    let queue = ReviewQueue::replay(&entries, ctx.config.review)?;
    let snapshot = queue.snapshot();
    let out = ctx.out_dir()?.join("replayed_snapshot.json");
    write_snapshot(&out, &snapshot)?;
    let mut errors = Vec::new();
    let matches = match &args.snapshot {
        Some(path) => {
            let expected = read_snapshot(path).with_context(|| format!("cannot read {}", path.display()))?;
            let same = expected == snapshot;
            if !same {
                errors.push(format!("replayed state differs from {}", path.display()));
            }
            Some(same)
        }
        None => None,
    };
    let finalized = snapshot
        .items
        .iter()
        .filter(|i| i.state == dualspace_core::review::ItemState::Finalized)
        .count();
    ctx.write_manifest(
        "audit-replay",
        json!({ "log": args.log.display().to_string(), "snapshot": args.snapshot.as_ref().map(|p| p.display().to_string()) }),
        &["replayed_snapshot.json".into()],
        json!({ "entries": entries.len(), "items": snapshot.items.len(), "finalized": finalized, "snapshot_matches": matches }),
        &errors,
    )?;
    println!(
        "{} entries replayed, {} items, {} finalized{}",
        entries.len(),
        snapshot.items.len(),
        finalized,
        match matches {
            Some(true) => ", snapshot matches",
            Some(false) => ", snapshot differs",
            None => "",
        }
    );
    Ok(Outcome { errors })
}
