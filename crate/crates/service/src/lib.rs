//! HTTP facade over the review queue.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/api/queue/next?reviewer=<id>` | 200 item, 204 nothing to review, 400 no reviewer |
//! | POST | `/api/items/{stem}/decision` | 200 new state, 404, 409 finalized, 422 invalid (names the field) |
//! | GET | `/api/stats` | agreement report over finalized items |
//! | GET | `/api/images/{scene}/{stem}` | image bytes, 404 for anything not in the queue |
//!
//! All queue mutations go through [`ReviewQueue::apply`] under one lock, so
//! the audit log is the complete history of state changes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use dualspace_core::review::{
    agreement_report, finalized_agreement, read_audit_log, write_snapshot, AuditReadError, AuditSink, Clock,
    FieldVerdict, ItemState, JsonlAuditLog, QueueConfig, ReplayError, ReviewDecision, ReviewError, ReviewField,
    ReviewItem, ReviewQueue,
};
use dualspace_core::schema::{parse_record_for, scan_corpus};
use dualspace_core::{EmotionLabel, VadVector};

struct Writer {
    queue: ReviewQueue,
    sink: Box<dyn AuditSink + Send>,
}

/// Shared service state. Image locations are fixed at construction, so
/// image requests never take the queue lock.
pub struct ReviewService {
    writer: Mutex<Writer>,
    clock: Arc<dyn Clock>,
    corpus_root: PathBuf,
    images: HashMap<String, (String, String)>,
    snapshot_path: Option<PathBuf>,
}

impl ReviewService {
    pub fn new(
        queue: ReviewQueue,
        sink: Box<dyn AuditSink + Send>,
        clock: Arc<dyn Clock>,
        corpus_root: &Path,
    ) -> Self {
        let images = queue
            .items()
            .map(|i| (i.stem.clone(), (i.scene.clone(), i.image_ref.clone())))
            .collect();
        ReviewService {
            writer: Mutex::new(Writer { queue, sink }),
            clock,
            corpus_root: corpus_root.to_path_buf(),
            images,
            snapshot_path: None,
        }
    }

    /// Rewrites the queue snapshot at `path` after every accepted decision.
    pub fn with_snapshot(mut self, path: &Path) -> Self {
        self.snapshot_path = Some(path.to_path_buf());
        self
    }

    fn lock(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// A copy of the current queue, for inspection and tests.
    pub fn queue(&self) -> ReviewQueue {
        self.lock().queue.clone()
    }
}

/// Builds the router. `cors_origin` of `None` allows any origin.
pub fn router(service: Arc<ReviewService>, cors_origin: Option<HeaderValue>) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .allow_origin(match cors_origin {
            Some(origin) => AllowOrigin::exact(origin),
            None => AllowOrigin::any(),
        });
    Router::new()
        .route("/api/queue/next", get(next_item))
        .route("/api/items/{stem}/decision", post(post_decision))
        .route("/api/stats", get(stats))
        .route("/api/images/{scene}/{stem}", get(image))
        .layer(cors)
        .with_state(service)
}

fn error(status: StatusCode, message: impl Into<String>, field: Option<ReviewField>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some(f) = field {
        body["field"] = json!(f.as_str());
    }
    (status, Json(body)).into_response()
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    reviewer: Option<String>,
}

/// What the review UI renders for one item.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ItemPayload {
    pub stem: String,
    pub scene: String,
    pub image_url: String,
    pub emotion_candidates: Vec<EmotionLabel>,
    pub vad: VadVector,
    pub round: u32,
    pub state: ItemState,
    pub fields: Vec<ReviewField>,
}

impl From<&ReviewItem> for ItemPayload {
    fn from(item: &ReviewItem) -> Self {
        ItemPayload {
            stem: item.stem.clone(),
            scene: item.scene.clone(),
            image_url: format!("/api/images/{}/{}", item.scene, item.stem),
            emotion_candidates: item.emotion_candidates.clone(),
            vad: item.vad,
            round: item.round,
            state: item.state,
            fields: item.presented_fields(),
        }
    }
}

async fn next_item(State(svc): State<Arc<ReviewService>>, Query(q): Query<NextQuery>) -> Response {
    let Some(reviewer) = q.reviewer.filter(|r| !r.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing reviewer id", None);
    };
    let now = svc.clock.now();
    let item = svc.lock().queue.next_pending(reviewer.trim(), now);
    match item {
        Some(item) => Json(ItemPayload::from(&item)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

/// Decision body; the stem comes from the URL and the timestamp defaults
/// to the server clock.
#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionBody {
    pub reviewer: String,
    pub verdicts: Vec<FieldVerdict>,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

async fn post_decision(
    State(svc): State<Arc<ReviewService>>,
    UrlPath(stem): UrlPath<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text(), None),
    };
    if body.reviewer.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "missing reviewer id", None);
    }
    let decision = ReviewDecision {
        stem,
        reviewer: body.reviewer,
        timestamp: body.timestamp.unwrap_or_else(|| svc.clock.now()),
        verdicts: body.verdicts,
    };
    let mut writer = svc.lock();
    let w = &mut *writer;
    match w.queue.apply(&decision, w.sink.as_mut()) {
        Ok((item, entry)) => {
            if let Some(path) = &svc.snapshot_path {
                if let Err(e) = write_snapshot(path, &w.queue.snapshot()) {
                    tracing::warn!("snapshot write failed: {e}");
                }
            }
            Json(json!({
                "state": item.state,
                "round": item.round,
                "sequence": entry.sequence,
                "flags": item.flags,
            }))
            .into_response()
        }
        Err(e) => {
            let status = match &e {
                ReviewError::UnknownStem(_) => StatusCode::NOT_FOUND,
                ReviewError::AlreadyFinalized(_) => StatusCode::CONFLICT,
                ReviewError::MissingRationale(_)
                | ReviewError::IncompleteDecision { .. }
                | ReviewError::InvalidCorrection { .. }
                | ReviewError::StemMismatch { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                ReviewError::DuplicateStem(_) | ReviewError::Audit(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            error(status, e.to_string(), e.field())
        }
    }
}

async fn stats(State(svc): State<Arc<ReviewService>>) -> Response {
    let (pairs, matrix) = finalized_agreement(&svc.lock().queue);
    let report = agreement_report(&pairs, if pairs.is_empty() { None } else { Some(&matrix) });
    let table = report.render_table("Review audit");
    let mut body = serde_json::to_value(&report).unwrap_or_else(|_| json!({}));
    body["table"] = json!(table);
    Json(body).into_response()
}

fn content_type(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn image(State(svc): State<Arc<ReviewService>>, UrlPath((scene, stem)): UrlPath<(String, String)>) -> Response {
    let not_found = || error(StatusCode::NOT_FOUND, "unknown image", None);
    let Some((item_scene, image_ref)) = svc.images.get(&stem) else {
        return not_found();
    };
    if *item_scene != scene {
        return not_found();
    }
    match tokio::fs::read(svc.corpus_root.join(image_ref)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(image_ref))], bytes).into_response(),
        Err(_) => not_found(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Scan(#[from] dualspace_core::schema::ScanError),
    #[error("audit log: {0}")]
    AuditRead(#[from] AuditReadError),
    #[error("audit log replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("audit log: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot enqueue: {0}")]
    Enqueue(#[from] ReviewError),
}

/// Outcome of [`bootstrap`]; `skipped` lists stems whose JSON could not be
/// parsed or has no usable VAD.
pub struct Bootstrapped {
    pub service: ReviewService,
    pub replayed: usize,
    pub enqueued: usize,
    pub skipped: Vec<String>,
}

/// Rebuilds the queue from `audit_path` (if it exists), then enqueues every
/// corpus record not yet in it. New entries append to the same log.
pub fn bootstrap(
    corpus_root: &Path,
    audit_path: &Path,
    config: QueueConfig,
    clock: Arc<dyn Clock>,
) -> Result<Bootstrapped, BootstrapError> {
    let scan = scan_corpus(corpus_root)?;
    let (mut queue, replayed) = if audit_path.exists() {
        let entries = read_audit_log(audit_path)?;
        (ReviewQueue::replay(&entries, config)?, entries.len())
    } else {
        (ReviewQueue::new(config), 0)
    };
    let mut sink = JsonlAuditLog::open(audit_path)?;
    let mut enqueued = 0;
    let mut skipped = Vec::new();
    for entry in &scan.pairs {
        if queue.get(&entry.stem).is_some() {
            continue;
        }
        let record = std::fs::read(&entry.json_path)
            .ok()
            .and_then(|raw| parse_record_for(&entry.stem, &raw).ok());
        let image_ref = entry.image_path.strip_prefix(corpus_root).unwrap_or(&entry.image_path);
        let image_ref = image_ref.to_string_lossy().replace('\\', "/");
        match record.and_then(|r| ReviewItem::from_record(&r, &image_ref)) {
            Some(item) => match queue.enqueue(item, &mut sink) {
                Ok(_) => enqueued += 1,
                Err(ReviewError::DuplicateStem(stem)) => skipped.push(stem),
                Err(e) => return Err(e.into()),
            },
            None => skipped.push(entry.stem.clone()),
        }
    }
    Ok(Bootstrapped {
        service: ReviewService::new(queue, Box::new(sink), clock, corpus_root),
        replayed,
        enqueued,
        skipped,
    })
}
