//! Human review of machine annotations: the per-item state machine, the
//! leased work queue, the append-only audit log and agreement statistics.
//!
//! Each item presents one or two emotion suggestions and three VAD scores.
//! A reviewer answers yes or no per field; a no needs a rationale and may
//! carry a corrected value. All-yes finalizes the item, anything else sends
//! it back for another round with the corrections applied.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interplay::{pearson_r, StatsError};
use crate::schema::{AnnotationRecord, EmotionLabel, VadVector};

pub const DEFAULT_LEASE_MINUTES: i64 = 15;
pub const DEFAULT_MAX_ROUNDS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemState {
    Pending,
    Recheck,
    Finalized,
}

impl ItemState {
    /// Whether the transition diagram allows `self -> next`.
    pub fn may_become(self, next: ItemState) -> bool {
        matches!(
            (self, next),
            (ItemState::Pending, ItemState::Finalized | ItemState::Recheck)
                | (ItemState::Recheck, ItemState::Finalized | ItemState::Recheck)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReviewField {
    #[serde(rename = "emotion_1")]
    Emotion1,
    #[serde(rename = "emotion_2")]
    Emotion2,
    #[serde(rename = "valence")]
    Valence,
    #[serde(rename = "arousal")]
    Arousal,
    #[serde(rename = "dominance")]
    Dominance,
}

impl ReviewField {
    pub const ALL: [ReviewField; 5] = [
        ReviewField::Emotion1,
        ReviewField::Emotion2,
        ReviewField::Valence,
        ReviewField::Arousal,
        ReviewField::Dominance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewField::Emotion1 => "emotion_1",
            ReviewField::Emotion2 => "emotion_2",
            ReviewField::Valence => "valence",
            ReviewField::Arousal => "arousal",
            ReviewField::Dominance => "dominance",
        }
    }

    fn emotion_slot(self) -> Option<usize> {
        match self {
            ReviewField::Emotion1 => Some(0),
            ReviewField::Emotion2 => Some(1),
            _ => None,
        }
    }

    fn vad_slot(self) -> Option<usize> {
        match self {
            ReviewField::Valence => Some(0),
            ReviewField::Arousal => Some(1),
            ReviewField::Dominance => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for ReviewField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrectedValue {
    Emotion(EmotionLabel),
    Score(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVerdict {
    pub field: ReviewField,
    pub verdict: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_value: Option<CorrectedValue>,
}

impl FieldVerdict {
    pub fn yes(field: ReviewField) -> Self {
        FieldVerdict {
            field,
            verdict: Answer::Yes,
            rationale: None,
            corrected_value: None,
        }
    }

    pub fn no(field: ReviewField, rationale: &str, corrected_value: Option<CorrectedValue>) -> Self {
        FieldVerdict {
            field,
            verdict: Answer::No,
            rationale: Some(rationale.to_string()),
            corrected_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub stem: String,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    pub verdicts: Vec<FieldVerdict>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFlags {
    /// A rejection left nothing to carry forward; needs an expert correction.
    pub senior_review: bool,
    /// The item exceeded the round limit and is withheld from the queue.
    pub adjudication: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub stem: String,
    pub scene: String,
    /// Image path relative to the corpus root.
    pub image_ref: String,
    pub emotion_candidates: Vec<EmotionLabel>,
    pub vad: VadVector,
    pub state: ItemState,
    pub round: u32,
    /// The machine annotation as first presented.
    pub machine_emotion: EmotionLabel,
    pub machine_vad: VadVector,
    #[serde(default)]
    pub flags: ReviewFlags,
}

impl ReviewItem {
    pub fn new(stem: &str, scene: &str, image_ref: &str, candidates: Vec<EmotionLabel>, vad: VadVector) -> Self {
        let machine_emotion = candidates.first().copied().unwrap_or(EmotionLabel::Unknown);
        ReviewItem {
            stem: stem.to_string(),
            scene: scene.to_string(),
            image_ref: image_ref.to_string(),
            emotion_candidates: candidates,
            vad,
            state: ItemState::Pending,
            round: 1,
            machine_emotion,
            machine_vad: vad,
            flags: ReviewFlags::default(),
        }
    }

    /// Builds the first-round item from a record: the resolved emotion, then
    /// the most frequent differing per-model emotion (ties by label order).
    pub fn from_record(record: &AnnotationRecord, image_ref: &str) -> Option<Self> {
        let vad = record.effective_vad()?;
        let mut counts: BTreeMap<EmotionLabel, usize> = BTreeMap::new();
        for label in record.per_model_emotion.values() {
            if *label != record.emotion {
                *counts.entry(*label).or_default() += 1;
            }
        }
        let mut candidates = vec![record.emotion];
        if let Some((label, _)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            candidates.push(*label);
        }
        Some(ReviewItem::new(&record.stem, &record.scene, image_ref, candidates, vad))
    }

    /// Fields shown to the reviewer, in display order.
    pub fn presented_fields(&self) -> Vec<ReviewField> {
        let mut fields = vec![ReviewField::Emotion1];
        if self.emotion_candidates.len() > 1 {
            fields.push(ReviewField::Emotion2);
        }
        fields.extend([ReviewField::Valence, ReviewField::Arousal, ReviewField::Dominance]);
        fields
    }

    /// The label a finalized item settles on.
    pub fn final_emotion(&self) -> EmotionLabel {
        self.emotion_candidates.first().copied().unwrap_or(EmotionLabel::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageProblem {
    Missing,
    Duplicate,
    NotPresented,
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("item {0} is already finalized")]
    AlreadyFinalized(String),
    #[error("field {0} was rejected without a rationale")]
    MissingRationale(ReviewField),
    #[error("field {field} is {problem:?} in the decision")]
    IncompleteDecision { field: ReviewField, problem: CoverageProblem },
    #[error("field {field}: {reason}")]
    InvalidCorrection { field: ReviewField, reason: String },
    #[error("unknown item {0}")]
    UnknownStem(String),
    #[error("item {0} is already queued")]
    DuplicateStem(String),
    #[error("decision is for {found}, not {expected}")]
    StemMismatch { expected: String, found: String },
    #[error("audit log write failed: {0}")]
    Audit(#[from] std::io::Error),
}

impl ReviewError {
    /// The decision field a validation error refers to.
    pub fn field(&self) -> Option<ReviewField> {
        match self {
            ReviewError::MissingRationale(f) => Some(*f),
            ReviewError::IncompleteDecision { field, .. } | ReviewError::InvalidCorrection { field, .. } => Some(*field),
            _ => None,
        }
    }
}

fn validate_decision(item: &ReviewItem, decision: &ReviewDecision) -> Result<(), ReviewError> {
    if decision.stem != item.stem {
        return Err(ReviewError::StemMismatch {
            expected: item.stem.clone(),
            found: decision.stem.clone(),
        });
    }
    if item.state == ItemState::Finalized {
        return Err(ReviewError::AlreadyFinalized(item.stem.clone()));
    }
    let presented = item.presented_fields();
    let mut seen: Vec<ReviewField> = Vec::new();
    for v in &decision.verdicts {
        if !presented.contains(&v.field) {
            return Err(ReviewError::IncompleteDecision {
                field: v.field,
                problem: CoverageProblem::NotPresented,
            });
        }
        if seen.contains(&v.field) {
            return Err(ReviewError::IncompleteDecision {
                field: v.field,
                problem: CoverageProblem::Duplicate,
            });
        }
        seen.push(v.field);
    }
    if let Some(field) = presented.iter().find(|f| !seen.contains(f)) {
        return Err(ReviewError::IncompleteDecision {
            field: *field,
            problem: CoverageProblem::Missing,
        });
    }
    for v in &decision.verdicts {
        match v.verdict {
            Answer::No => {
                if v.rationale.as_deref().is_none_or(|r| r.trim().is_empty()) {
                    return Err(ReviewError::MissingRationale(v.field));
                }
            }
            Answer::Yes => {
                if v.corrected_value.is_some() {
                    return Err(ReviewError::InvalidCorrection {
                        field: v.field,
                        reason: "a corrected value requires a no verdict".into(),
                    });
                }
            }
        }
        match (v.corrected_value, v.field.vad_slot()) {
            (Some(CorrectedValue::Score(_)), None) => {
                return Err(ReviewError::InvalidCorrection {
                    field: v.field,
                    reason: "expected an emotion label".into(),
                })
            }
            (Some(CorrectedValue::Emotion(_)), Some(_)) => {
                return Err(ReviewError::InvalidCorrection {
                    field: v.field,
                    reason: "expected a score between 1 and 9".into(),
                })
            }
            (Some(CorrectedValue::Score(s)), Some(_)) if !(VadVector::MIN..=VadVector::MAX).contains(&s) => {
                return Err(ReviewError::InvalidCorrection {
                    field: v.field,
                    reason: format!("score {s} is outside 1..9"),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Pure transition: validates `decision` against `item` and returns the
/// updated item. `item` is never modified.
pub fn apply_decision(item: &ReviewItem, decision: &ReviewDecision, max_rounds: u32) -> Result<ReviewItem, ReviewError> {
    validate_decision(item, decision)?;
    let mut next = item.clone();
    if decision.verdicts.iter().all(|v| v.verdict == Answer::Yes) {
        next.state = ItemState::Finalized;
        return Ok(next);
    }
    let verdict_for = |field: ReviewField| decision.verdicts.iter().find(|v| v.field == field);

    let mut candidates = Vec::new();
    for (slot, label) in item.emotion_candidates.iter().enumerate() {
        let field = if slot == 0 { ReviewField::Emotion1 } else { ReviewField::Emotion2 };
        debug_assert_eq!(field.emotion_slot(), Some(slot));
        let Some(v) = verdict_for(field) else { continue };
        let carried = match (v.verdict, v.corrected_value) {
            (Answer::Yes, _) => Some(*label),
            (Answer::No, Some(CorrectedValue::Emotion(corrected))) => Some(corrected),
            (Answer::No, _) => None,
        };
        if let Some(c) = carried {
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
    }
    if candidates.is_empty() {
        candidates.push(EmotionLabel::Unknown);
        next.flags.senior_review = true;
    }
    next.emotion_candidates = candidates;

    let mut vad = item.vad.as_array();
    for field in [ReviewField::Valence, ReviewField::Arousal, ReviewField::Dominance] {
        let Some(v) = verdict_for(field) else { continue };
        if v.verdict == Answer::No {
            match v.corrected_value {
                Some(CorrectedValue::Score(s)) => vad[field.vad_slot().unwrap_or(0)] = s,
                _ => next.flags.senior_review = true,
            }
        }
    }
    next.vad = VadVector::new(vad[0], vad[1], vad[2]);
    next.state = ItemState::Recheck;
    next.round = item.round + 1;
    if next.round > max_rounds {
        next.flags.adjudication = true;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum AuditEvent {
    Enqueued { item: ReviewItem },
    Decided { decision: ReviewDecision, state: ItemState, round: u32 },
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sequence: u64,
    #[serde(flatten)]
    pub event: AuditEvent,
}

/// Destination of audit entries. `append` must make the entry durable (or
/// fail) before returning.
pub trait AuditSink {
    fn append(&mut self, entry: &AuditEntry) -> std::io::Result<()>;
}

impl AuditSink for Vec<AuditEntry> {
    fn append(&mut self, entry: &AuditEntry) -> std::io::Result<()> {
        self.push(entry.clone());
        Ok(())
    }
}

/// Line-delimited JSON audit log, flushed per entry.
pub struct JsonlAuditLog {
    out: BufWriter<File>,
}

impl JsonlAuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlAuditLog { out: BufWriter::new(file) })
    }
}

impl AuditSink for JsonlAuditLog {
    fn append(&mut self, entry: &AuditEntry) -> std::io::Result<()> {
        let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}

#[derive(Debug, Error)]
pub enum AuditReadError {
    #[error("audit log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEntry>, AuditReadError> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|source| AuditReadError::Parse { line: i + 1, source })?);
    }
    Ok(entries)
}

/// Source of the current time, replaceable in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        let mut t = self.0.lock().unwrap_or_else(|e| e.into_inner());
        *t += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueConfig {
    pub lease_minutes: i64,
    pub max_rounds: u32,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            lease_minutes: DEFAULT_LEASE_MINUTES,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Lease {
    reviewer: String,
    expires: DateTime<Utc>,
}

/// Persistent queue contents: everything replay reconstructs. Leases are
/// not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSnapshot {
    pub next_sequence: u64,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("expected sequence {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("entry {sequence}: {source}")]
    Rejected { sequence: u64, source: ReviewError },
    #[error("entry {sequence} records {recorded:?} round {recorded_round}, replay gives {replayed:?} round {replayed_round}")]
    Diverged {
        sequence: u64,
        recorded: ItemState,
        recorded_round: u32,
        replayed: ItemState,
        replayed_round: u32,
    },
}

#[derive(Debug, Clone)]
pub struct ReviewQueue {
    config: QueueConfig,
    items: BTreeMap<String, ReviewItem>,
    leases: HashMap<String, Lease>,
    next_sequence: u64,
}

impl ReviewQueue {
    pub fn new(config: QueueConfig) -> Self {
        ReviewQueue {
            config,
            items: BTreeMap::new(),
            leases: HashMap::new(),
            next_sequence: 1,
        }
    }

    pub fn config(&self) -> QueueConfig {
        self.config
    }

    pub fn get(&self, stem: &str) -> Option<&ReviewItem> {
        self.items.get(stem)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn commit(&mut self, event: AuditEvent, sink: &mut dyn AuditSink) -> Result<AuditEntry, ReviewError> {
        let entry = AuditEntry {
            sequence: self.next_sequence,
            event,
        };
        sink.append(&entry)?;
        self.next_sequence += 1;
        match &entry.event {
            AuditEvent::Enqueued { item } => {
                self.items.insert(item.stem.clone(), item.clone());
            }
            AuditEvent::Decided { decision, .. } => {
                self.leases.remove(&decision.stem);
            }
        }
        Ok(entry)
    }

    /// Adds a new item, logging it so replay can rebuild the queue.
    pub fn enqueue(&mut self, item: ReviewItem, sink: &mut dyn AuditSink) -> Result<AuditEntry, ReviewError> {
        if self.items.contains_key(&item.stem) {
            return Err(ReviewError::DuplicateStem(item.stem));
        }
        self.commit(AuditEvent::Enqueued { item }, sink)
    }

    /// Validates and applies a decision. The audit entry is written first;
    /// if that fails the queue is left untouched.
    pub fn apply(&mut self, decision: &ReviewDecision, sink: &mut dyn AuditSink) -> Result<(ReviewItem, AuditEntry), ReviewError> {
        let item = self
            .items
            .get(&decision.stem)
            .ok_or_else(|| ReviewError::UnknownStem(decision.stem.clone()))?;
        let next = apply_decision(item, decision, self.config.max_rounds)?;
        let entry = self.commit(
            AuditEvent::Decided {
                decision: decision.clone(),
                state: next.state,
                round: next.round,
            },
            sink,
        )?;
        self.items.insert(next.stem.clone(), next.clone());
        Ok((next, entry))
    }

    /// Hands out the next item for `reviewer` and leases it. A reviewer who
    /// already holds a live lease gets the same item back. Order: recheck
    /// before pending, then higher round, then stem.
    pub fn next_pending(&mut self, reviewer: &str, now: DateTime<Utc>) -> Option<ReviewItem> {
        self.leases.retain(|_, l| l.expires > now);
        if let Some((stem, _)) = self.leases.iter().find(|(_, l)| l.reviewer == reviewer) {
            if let Some(item) = self.items.get(stem) {
                return Some(item.clone());
            }
        }
        let pick = self
            .items
            .values()
            .filter(|i| i.state != ItemState::Finalized && !i.flags.adjudication)
            .filter(|i| !self.leases.contains_key(&i.stem))
            .min_by(|a, b| {
                let rank = |i: &ReviewItem| u8::from(i.state != ItemState::Recheck);
                rank(a).cmp(&rank(b)).then(b.round.cmp(&a.round)).then(a.stem.cmp(&b.stem))
            })?
            .clone();
        self.leases.insert(
            pick.stem.clone(),
            Lease {
                reviewer: reviewer.to_string(),
                expires: now + Duration::minutes(self.config.lease_minutes),
            },
        );
        Some(pick)
    }

    pub fn snapshot(&self) -> QueueSnapshot {
        QueueSnapshot {
            next_sequence: self.next_sequence,
            items: self.items.values().cloned().collect(),
        }
    }

    /// Rebuilds a queue from an audit log, checking sequence continuity and
    /// that every recorded outcome is reproduced.
    pub fn replay<'a, I>(entries: I, config: QueueConfig) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = &'a AuditEntry>,
    {
        let mut queue = ReviewQueue::new(config);
        let mut discard: Vec<AuditEntry> = Vec::new();
        for entry in entries {
            if entry.sequence != queue.next_sequence {
                return Err(ReplayError::SequenceGap {
                    expected: queue.next_sequence,
                    found: entry.sequence,
                });
            }
            let rejected = |source| ReplayError::Rejected {
                sequence: entry.sequence,
                source,
            };
            match &entry.event {
                AuditEvent::Enqueued { item } => {
                    queue.enqueue(item.clone(), &mut discard).map_err(rejected)?;
                }
                AuditEvent::Decided { decision, state, round } => {
                    let (item, _) = queue.apply(decision, &mut discard).map_err(rejected)?;
                    if item.state != *state || item.round != *round {
                        return Err(ReplayError::Diverged {
                            sequence: entry.sequence,
                            recorded: *state,
                            recorded_round: *round,
                            replayed: item.state,
                            replayed_round: item.round,
                        });
                    }
                }
            }
            discard.clear();
        }
        Ok(queue)
    }
}

pub fn write_snapshot(path: &Path, snapshot: &QueueSnapshot) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut out = BufWriter::new(File::create(&tmp)?);
    serde_json::to_writer_pretty(&mut out, snapshot).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    out.flush()?;
    out.get_ref().sync_data()?;
    std::fs::rename(tmp, path)
}

pub fn read_snapshot(path: &Path) -> std::io::Result<QueueSnapshot> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(std::io::Error::other)
}

/// One rejected field, for exporting corrections back to the annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldCorrection {
    pub sequence: u64,
    pub stem: String,
    pub reviewer: String,
    pub field: ReviewField,
    pub rationale: String,
    pub corrected_value: Option<CorrectedValue>,
}

pub fn field_corrections(entries: &[AuditEntry]) -> Vec<FieldCorrection> {
    let mut out = Vec::new();
    for entry in entries {
        let AuditEvent::Decided { decision, .. } = &entry.event else { continue };
        for v in decision.verdicts.iter().filter(|v| v.verdict == Answer::No) {
            out.push(FieldCorrection {
                sequence: entry.sequence,
                stem: decision.stem.clone(),
                reviewer: decision.reviewer.clone(),
                field: v.field,
                rationale: v.rationale.clone().unwrap_or_default(),
                corrected_value: v.corrected_value,
            });
        }
    }
    out
}

/// Fleiss' kappa for `items x raters` categorical ratings. Every item must
/// have the same number (at least two) of ratings.
pub fn fleiss_kappa<C: Ord + Clone>(ratings: &[Vec<C>]) -> Result<f64, StatsError> {
    let raters = ratings.first().map(Vec::len).ok_or(StatsError::DegenerateInput)?;
    if raters < 2 {
        return Err(StatsError::DegenerateInput);
    }
    let mut totals: BTreeMap<C, usize> = BTreeMap::new();
    let mut agreement = 0.0;
    for row in ratings {
        if row.len() != raters {
            return Err(StatsError::LengthMismatch { x: raters, y: row.len() });
        }
        let mut counts: BTreeMap<&C, usize> = BTreeMap::new();
        for c in row {
            *counts.entry(c).or_default() += 1;
            *totals.entry(c.clone()).or_default() += 1;
        }
        let sq: usize = counts.values().map(|n| n * n).sum();
        agreement += (sq - raters) as f64 / (raters * (raters - 1)) as f64;
    }
    let n_items = ratings.len() as f64;
    let p_bar = agreement / n_items;
    let total = n_items * raters as f64;
    let p_e: f64 = totals.values().map(|&n| (n as f64 / total).powi(2)).sum();
    if p_e >= 1.0 {
        // a single category was used throughout
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// A statistic or the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Stat {
    Value(f64),
    Undefined { undefined: String },
}

impl Stat {
    fn from_result(r: Result<f64, StatsError>) -> Self {
        match r {
            Ok(v) => Stat::Value(v),
            Err(e) => Stat::Undefined { undefined: e.to_string() },
        }
    }

    fn empty() -> Self {
        Stat::Undefined {
            undefined: "no finalized items".into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Stat::Value(v) => Some(*v),
            Stat::Undefined { .. } => None,
        }
    }

    fn render(&self, decimals: usize, suffix: &str) -> String {
        match self {
            Stat::Value(v) => format!("{v:.decimals$}{suffix}"),
            Stat::Undefined { .. } => "-".into(),
        }
    }
}

/// A discrete label with its VAD, from one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledAffect {
    pub label: EmotionLabel,
    pub vad: VadVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementPair {
    pub machine: LabeledAffect,
    pub human: LabeledAffect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerDimension {
    pub valence: Stat,
    pub arousal: Stat,
    pub dominance: Stat,
}

/// Machine-vs-human agreement. `accuracy` is a percentage; `mse` is on the
/// normalised `[0, 1]` VAD scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub n: usize,
    pub accuracy: Stat,
    pub mse: PerDimension,
    pub pearson: PerDimension,
    pub fleiss_kappa: Stat,
}

pub fn agreement_report(pairs: &[AgreementPair], multi_rater: Option<&[Vec<EmotionLabel>]>) -> AgreementReport {
    let kappa = match multi_rater {
        Some(m) => Stat::from_result(fleiss_kappa(m)),
        None => Stat::Undefined {
            undefined: "no multi-rater ratings".into(),
        },
    };
    if pairs.is_empty() {
        let empty = || PerDimension {
            valence: Stat::empty(),
            arousal: Stat::empty(),
            dominance: Stat::empty(),
        };
        return AgreementReport {
            n: 0,
            accuracy: Stat::empty(),
            mse: empty(),
            pearson: empty(),
            fleiss_kappa: if multi_rater.is_some() { kappa } else { Stat::empty() },
        };
    }
    let n = pairs.len() as f64;
    let matches = pairs.iter().filter(|p| p.machine.label == p.human.label).count();
    let dims = |k: usize| -> (Stat, Stat) {
        let m: Vec<f64> = pairs.iter().map(|p| p.machine.vad.normalized()[k]).collect();
        let h: Vec<f64> = pairs.iter().map(|p| p.human.vad.normalized()[k]).collect();
        let mse = m.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        (Stat::Value(mse), Stat::from_result(pearson_r(&m, &h)))
    };
    let (mv, rv) = dims(0);
    let (ma, ra) = dims(1);
    let (md, rd) = dims(2);
    AgreementReport {
        n: pairs.len(),
        accuracy: Stat::Value(100.0 * matches as f64 / n),
        mse: PerDimension {
            valence: mv,
            arousal: ma,
            dominance: md,
        },
        pearson: PerDimension {
            valence: rv,
            arousal: ra,
            dominance: rd,
        },
        fleiss_kappa: kappa,
    }
}

impl AgreementReport {
    /// Markdown table with discrete (accuracy / kappa) and VAD (MSE / r)
    /// column groups.
    pub fn render_table(&self, source: &str) -> String {
        let d = |p: &PerDimension, decimals| {
            [&p.valence, &p.arousal, &p.dominance]
                .iter()
                .map(|s| s.render(decimals, ""))
                .collect::<Vec<_>>()
                .join(" / ")
        };
        let mut out = String::new();
        out.push_str("| Source | n | Discrete (Acc. / κ) | VAD MSE (V / A / D) | VAD r (V / A / D) |\n");
        out.push_str("|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {source} | {} | {} / {} | {} | {} |\n",
            self.n,
            self.accuracy.render(2, "%"),
            self.fleiss_kappa.render(2, ""),
            d(&self.mse, 3),
            d(&self.pearson, 3),
        ));
        out
    }
}

/// Machine-vs-final pairs for every finalized item, and the matching
/// two-rater (machine, reviewer) label matrix.
pub fn finalized_agreement(queue: &ReviewQueue) -> (Vec<AgreementPair>, Vec<Vec<EmotionLabel>>) {
    let mut pairs = Vec::new();
    let mut matrix = Vec::new();
    for item in queue.items().filter(|i| i.state == ItemState::Finalized) {
        let pair = AgreementPair {
            machine: LabeledAffect {
                label: item.machine_emotion,
                vad: item.machine_vad,
            },
            human: LabeledAffect {
                label: item.final_emotion(),
                vad: item.vad,
            },
        };
        matrix.push(vec![pair.machine.label, pair.human.label]);
        pairs.push(pair);
    }
    (pairs, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 1, 1, 9, 0, 0).unwrap()
    }

    fn item(stem: &str, two: bool) -> ReviewItem {
        let mut c = vec![EmotionLabel::Contentment];
        if two {
            c.push(EmotionLabel::Awe);
        }
        ReviewItem::new(stem, "park", &format!("park/{stem}.jpg"), c, VadVector::new(6.0, 3.0, 5.0))
    }

    fn decision(item: &ReviewItem, verdicts: Vec<FieldVerdict>) -> ReviewDecision {
        ReviewDecision {
            stem: item.stem.clone(),
            reviewer: "r1".into(),
            timestamp: t0(),
            verdicts,
        }
    }

    fn all_yes(item: &ReviewItem) -> ReviewDecision {
        decision(item, item.presented_fields().into_iter().map(FieldVerdict::yes).collect())
    }

    #[test]
    fn all_yes_finalizes() {
        let it = item("a", true);
        let next = apply_decision(&it, &all_yes(&it), 5).unwrap();
        assert_eq!(next.state, ItemState::Finalized);
        assert_eq!(next.round, 1);
        assert!(matches!(apply_decision(&next, &all_yes(&next), 5), Err(ReviewError::AlreadyFinalized(_))));
    }

    #[test]
    fn valence_no_rechecks() {
        let it = item("a", true);
        let mut d = all_yes(&it);
        d.verdicts[2] = FieldVerdict::no(ReviewField::Valence, "arousal inconsistent with calm scene", None);
        let next = apply_decision(&it, &d, 5).unwrap();
        assert_eq!((next.state, next.round), (ItemState::Recheck, 2));
        assert!(next.flags.senior_review);
    }

    #[test]
    fn missing_rationale_and_coverage() {
        let it = item("a", false);
        let mut d = all_yes(&it);
        d.verdicts[1] = FieldVerdict {
            field: ReviewField::Valence,
            verdict: Answer::No,
            rationale: Some("  ".into()),
            corrected_value: None,
        };
        assert!(matches!(apply_decision(&it, &d, 5), Err(ReviewError::MissingRationale(ReviewField::Valence))));
        let mut d = all_yes(&it);
        d.verdicts.pop();
        assert!(matches!(
            apply_decision(&it, &d, 5),
            Err(ReviewError::IncompleteDecision {
                field: ReviewField::Dominance,
                problem: CoverageProblem::Missing
            })
        ));
        let mut d = all_yes(&it);
        d.verdicts.push(FieldVerdict::yes(ReviewField::Emotion2));
        assert!(matches!(
            apply_decision(&it, &d, 5),
            Err(ReviewError::IncompleteDecision {
                problem: CoverageProblem::NotPresented,
                ..
            })
        ));
    }

    #[test]
    fn corrections_carry_forward() {
        let it = item("a", true);
        let d = decision(
            &it,
            vec![
                FieldVerdict::no(ReviewField::Emotion1, "not calm", Some(CorrectedValue::Emotion(EmotionLabel::Fear))),
                FieldVerdict::no(ReviewField::Emotion2, "no", None),
                FieldVerdict::yes(ReviewField::Valence),
                FieldVerdict::no(ReviewField::Arousal, "tense", Some(CorrectedValue::Score(7.0))),
                FieldVerdict::yes(ReviewField::Dominance),
            ],
        );
        let next = apply_decision(&it, &d, 5).unwrap();
        assert_eq!(next.emotion_candidates, vec![EmotionLabel::Fear]);
        assert_eq!(next.vad, VadVector::new(6.0, 7.0, 5.0));
        assert!(!next.flags.senior_review);
        assert_eq!(next.presented_fields().len(), 4);
    }

    #[test]
    fn both_emotions_rejected_without_correction() {
        let it = item("a", true);
        let mut d = all_yes(&it);
        d.verdicts[0] = FieldVerdict::no(ReviewField::Emotion1, "x", None);
        d.verdicts[1] = FieldVerdict::no(ReviewField::Emotion2, "y", None);
        let next = apply_decision(&it, &d, 5).unwrap();
        assert_eq!(next.emotion_candidates, vec![EmotionLabel::Unknown]);
        assert!(next.flags.senior_review);
    }

    #[test]
    fn round_limit_flags_adjudication() {
        let mut it = item("a", false);
        for _ in 0..2 {
            let mut d = all_yes(&it);
            d.verdicts[1] = FieldVerdict::no(ReviewField::Valence, "off", Some(CorrectedValue::Score(2.0)));
            it = apply_decision(&it, &d, 2).unwrap();
        }
        assert_eq!(it.round, 3);
        assert!(it.flags.adjudication);
        let mut q = ReviewQueue::new(QueueConfig::default());
        q.enqueue(it, &mut Vec::new()).unwrap();
        assert!(q.next_pending("r", t0()).is_none());
    }

    #[test]
    fn queue_order_and_leases() {
        let mut log = Vec::new();
        let mut q = ReviewQueue::new(QueueConfig::default());
        q.enqueue(item("a", false), &mut log).unwrap();
        let mut b = item("b", false);
        b.state = ItemState::Recheck;
        b.round = 2;
        q.enqueue(b, &mut log).unwrap();
        assert_eq!(q.next_pending("r1", t0()).unwrap().stem, "b");
        assert_eq!(q.next_pending("r1", t0()).unwrap().stem, "b");
        assert_eq!(q.next_pending("r2", t0()).unwrap().stem, "a");
        assert!(q.next_pending("r3", t0()).is_none());
        let later = t0() + Duration::minutes(DEFAULT_LEASE_MINUTES) + Duration::seconds(1);
        assert_eq!(q.next_pending("r3", later).unwrap().stem, "b");
    }

    #[test]
    fn failed_audit_write_leaves_queue_unchanged() {
        struct Broken;
        impl AuditSink for Broken {
            fn append(&mut self, _: &AuditEntry) -> std::io::Result<()> {
                Err(std::io::Error::other("disk full"))
            }
        }
        let mut q = ReviewQueue::new(QueueConfig::default());
        let it = item("a", false);
        q.enqueue(it.clone(), &mut Vec::new()).unwrap();
        let before = q.snapshot();
        assert!(matches!(q.apply(&all_yes(&it), &mut Broken), Err(ReviewError::Audit(_))));
        assert_eq!(q.snapshot(), before);
    }

    #[test]
    fn replay_reconstructs_and_detects_gaps() {
        let mut log = Vec::new();
        let mut q = ReviewQueue::new(QueueConfig::default());
        let it = item("a", true);
        q.enqueue(it.clone(), &mut log).unwrap();
        let mut d = all_yes(&it);
        d.verdicts[3] = FieldVerdict::no(ReviewField::Arousal, "too high", Some(CorrectedValue::Score(2.0)));
        let (next, _) = q.apply(&d, &mut log).unwrap();
        q.apply(&all_yes(&next), &mut log).unwrap();
        let replayed = ReviewQueue::replay(&log, QueueConfig::default()).unwrap();
        assert_eq!(replayed.snapshot(), q.snapshot());
        let mut gap = log.clone();
        gap.remove(1);
        assert!(matches!(
            ReviewQueue::replay(&gap, QueueConfig::default()),
            Err(ReplayError::SequenceGap { expected: 2, found: 3 })
        ));
        let json: Vec<String> = log.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        let back: Vec<AuditEntry> = json.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, log);
        assert_eq!(field_corrections(&log).len(), 1);
    }

    #[test]
    fn kappa_fixture() {
        use EmotionLabel::{Anger as A, Awe as B};
        let m = vec![vec![A, A, B], vec![A, A, A], vec![B, B, B]];
        let p_bar = (1.0 / 3.0 + 1.0 + 1.0) / 3.0;
        let p_e = (5.0f64 / 9.0).powi(2) + (4.0f64 / 9.0).powi(2);
        let expected = (p_bar - p_e) / (1.0 - p_e);
        assert!((fleiss_kappa(&m).unwrap() - expected).abs() < 1e-12);
        assert_eq!(fleiss_kappa(&[vec![A, A], vec![A, A]]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![A]]), Err(StatsError::DegenerateInput));
        assert_eq!(fleiss_kappa::<EmotionLabel>(&[]), Err(StatsError::DegenerateInput));
    }

    #[test]
    fn report_rendering() {
        let v = VadVector::new(5.0, 4.0, 6.0);
        let w = VadVector::new(7.0, 2.0, 3.0);
        let pair = |l, vad| AgreementPair {
            machine: LabeledAffect { label: l, vad },
            human: LabeledAffect { label: l, vad },
        };
        let pairs = [pair(EmotionLabel::Awe, v), pair(EmotionLabel::Fear, w)];
        let m = [vec![EmotionLabel::Awe; 2], vec![EmotionLabel::Fear; 2]];
        let r = agreement_report(&pairs, Some(&m));
        assert_eq!(r.accuracy, Stat::Value(100.0));
        assert_eq!(r.mse.valence, Stat::Value(0.0));
        assert_eq!(r.fleiss_kappa, Stat::Value(1.0));
        let table = r.render_table("audit");
        assert!(table.contains("Discrete (Acc. / κ)"));
        assert!(table.contains("100.00% / 1.00"));
        let empty = agreement_report(&[], None);
        assert!(empty.render_table("audit").contains("| - / - |"));
        assert_eq!(serde_json::to_value(&empty.accuracy).unwrap()["undefined"], "no finalized items");
    }
}
