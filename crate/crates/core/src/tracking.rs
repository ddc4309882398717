//! Work sessions, randomized presence-check schedules, the consecutive-miss
//! alert rule, archive records and alert delivery.

use crate::directory::{EmployeeId, EmployeeRecord};
use crate::gallery::Decision;
use crate::pipeline::FaceRecognition;
use crate::time::Timestamp;
use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        SessionId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlertId(pub String);

impl fmt::Display for AlertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("employee {0} not found or inactive")]
    EmployeeNotFound(EmployeeId),
    #[error("session {0} not found")]
    SessionNotFound(SessionId),
    #[error("employee {0} already has an active session")]
    SessionExists(EmployeeId),
    #[error("session {0} is not active")]
    SessionNotActive(SessionId),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("invalid tracking config: {0}")]
    InvalidConfig(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Ended,
    EndedByAdmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkSession {
    pub session_id: SessionId,
    pub employee_id: EmployeeId,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
    pub status: SessionStatus,
    /// Length of the current streak of non-present checks.
    pub miss_run: u32,
    pub checks_done: u32,
}

impl WorkSession {
    pub fn start(session_id: SessionId, employee_id: EmployeeId, now: Timestamp) -> Self {
        WorkSession {
            session_id,
            employee_id,
            started_at: now,
            ended_at: None,
            status: SessionStatus::Active,
            miss_run: 0,
            checks_done: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    pub fn end(&self, now: Timestamp, by_admin: bool) -> Result<WorkSession, TrackingError> {
        if !self.is_active() {
            return Err(TrackingError::SessionNotActive(self.session_id.clone()));
        }
        let mut s = self.clone();
        s.ended_at = Some(now.max(self.started_at));
        s.status = if by_admin { SessionStatus::EndedByAdmin } else { SessionStatus::Ended };
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Present,
    NoFace,
    UnknownFace,
    WrongPerson,
}

impl CheckOutcome {
    pub fn is_present(self) -> bool {
        self == CheckOutcome::Present
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    /// Consecutive non-present checks that raise an alert.
    pub n_miss: u32,
    pub segment_count: u32,
    /// How long after a scheduled check time a missing upload counts as `no_face`.
    pub grace_secs: u32,
    /// Keep frames for present checks too (non-present frames are always kept).
    pub store_present_frames: bool,
    /// Base for per-session schedule seeds.
    pub schedule_seed: u64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig { n_miss: 3, segment_count: 6, grace_secs: 120, store_present_frames: false, schedule_seed: 0 }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.n_miss == 0 {
            return Err(TrackingError::InvalidConfig("n_miss must be at least 1".into()));
        }
        if self.segment_count == 0 {
            return Err(TrackingError::InvalidConfig("segment_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Half-open time span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Span {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Span { start, end }
    }

    pub fn len_millis(&self) -> i64 {
        self.end.0 - self.start.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSchedule {
    pub session_id: SessionId,
    pub check_times: Vec<Timestamp>,
    pub segment_count: u32,
    pub rng_seed: u64,
}

/// Partition `span` into `segment_count` equal segments (integer millisecond
/// boundaries) and draw one uniform time inside each from a ChaCha8 stream
/// seeded with `rng_seed`.
pub fn schedule_checks(span: Span, segment_count: u32, rng_seed: u64) -> Result<Vec<Timestamp>, TrackingError> {
    if segment_count == 0 {
        return Err(TrackingError::InvalidConfig("segment_count must be at least 1".into()));
    }
    let len = span.len_millis();
    if len <= 0 {
        return Err(TrackingError::InvalidSpan(format!("span length {len} ms is not positive")));
    }
    let n = segment_count as i64;
    if len < n {
        return Err(TrackingError::InvalidSpan(format!(
            "span of {len} ms cannot hold {segment_count} non-empty segments"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bound = |i: i64| span.start.0 + ((len as i128 * i as i128) / n as i128) as i64;
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = (bound(i), bound(i + 1));
            let width = (hi - lo) as u128;
            let offset = ((rng.next_u64() as u128 * width) >> 64) as i64;
            Timestamp(lo + offset)
        })
        .collect())
}

impl CheckSchedule {
    pub fn generate(session_id: SessionId, span: Span, segment_count: u32, rng_seed: u64) -> Result<Self, TrackingError> {
        Ok(CheckSchedule { session_id, check_times: schedule_checks(span, segment_count, rng_seed)?, segment_count, rng_seed })
    }
}

/// Seed for the n-th session schedule, derived from a base seed (splitmix64).
pub fn derive_schedule_seed(base: u64, n: u64) -> u64 {
    let mut z = base.wrapping_add(n.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceCheck {
    pub check_id: u64,
    pub session_id: SessionId,
    pub at: Timestamp,
    pub outcome: CheckOutcome,
    pub best_distance: Option<f64>,
    pub frame_ref: Option<String>,
    /// Index of the scheduled check this fills, if any.
    pub slot: Option<u32>,
}

/// Map per-face recognitions to a check outcome for `employee`.
///
/// Present iff some face is identified as the employee. Otherwise no faces is
/// `no_face`, some face identified as someone else is `wrong_person`, and all
/// faces rejected is `unknown_face`. The distance reported is the matched
/// face's nearest distance when present, else the smallest nearest distance
/// over all faces.
pub fn classify_frame(faces: &[FaceRecognition], employee: &EmployeeId) -> (CheckOutcome, Option<f64>) {
    if faces.is_empty() {
        return (CheckOutcome::NoFace, None);
    }
    let nearest = |f: &FaceRecognition| f.identification.nearest_distance();
    if let Some(d) = faces
        .iter()
        .filter(|f| f.identification.decision.person() == Some(employee))
        .filter_map(nearest)
        .min_by(f64::total_cmp)
    {
        return (CheckOutcome::Present, Some(d));
    }
    let best = faces.iter().filter_map(nearest).min_by(f64::total_cmp);
    let someone_else = faces.iter().any(|f| matches!(f.identification.decision, Decision::Person(_)));
    if someone_else {
        (CheckOutcome::WrongPerson, best)
    } else {
        (CheckOutcome::UnknownFace, best)
    }
}

/// Advance the miss counter for one check. Returns the updated session and
/// whether this check completes a run of exactly `n_miss` misses.
pub fn apply_check(
    session: &WorkSession,
    outcome: CheckOutcome,
    config: &TrackingConfig,
) -> Result<(WorkSession, bool), TrackingError> {
    if !session.is_active() {
        return Err(TrackingError::SessionNotActive(session.session_id.clone()));
    }
    let mut s = session.clone();
    s.checks_done += 1;
    if outcome.is_present() {
        s.miss_run = 0;
        return Ok((s, false));
    }
    s.miss_run += 1;
    Ok((s.clone(), s.miss_run == config.n_miss))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipient {
    Admin,
    Employee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub alert_id: AlertId,
    pub session_id: SessionId,
    pub employee_id: EmployeeId,
    pub triggered_at: Timestamp,
    pub miss_run_length: u32,
    pub recipients: Vec<Recipient>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmployeeSnapshot {
    pub employee_id: EmployeeId,
    pub name: String,
    pub contact: String,
}

impl From<&EmployeeRecord> for EmployeeSnapshot {
    fn from(r: &EmployeeRecord) -> Self {
        EmployeeSnapshot { employee_id: r.employee_id.clone(), name: r.name.clone(), contact: r.contact.clone() }
    }
}

/// Immutable copy of a presence check with the employee's details at the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub seq: u64,
    pub check: PresenceCheck,
    pub employee: EmployeeSnapshot,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchiveFilter {
    pub employee_id: Option<EmployeeId>,
    pub session_id: Option<SessionId>,
    /// Inclusive lower bound on the check time.
    pub from: Option<Timestamp>,
    /// Exclusive upper bound on the check time.
    pub to: Option<Timestamp>,
}

impl ArchiveFilter {
    pub fn matches(&self, r: &ArchiveRecord) -> bool {
        self.employee_id.as_ref().is_none_or(|e| *e == r.employee.employee_id)
            && self.session_id.as_ref().is_none_or(|s| *s == r.check.session_id)
            && self.from.is_none_or(|f| r.check.at >= f)
            && self.to.is_none_or(|t| r.check.at < t)
    }
}

/// Archive export: one JSON record per line.
pub fn archive_to_jsonl(records: &[ArchiveRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("archive record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("notifier failed: {0}")]
pub struct NotifyError(pub String);

/// Delivery channel for alerts.
pub trait Notifier: Send + Sync {
    fn notify(&self, alert: &AlertEvent, recipient: Recipient) -> Result<(), NotifyError>;
}

#[derive(Debug, Serialize, Deserialize)]
struct AlertLogLine {
    alert_id: AlertId,
    recipient: Recipient,
    session_id: SessionId,
    employee_id: EmployeeId,
    triggered_at: Timestamp,
    miss_run_length: u32,
}

/// Appends one JSON object per delivery to a text file.
#[derive(Debug)]
pub struct LogNotifier {
    path: PathBuf,
    lock: Mutex<()>,
}

impl LogNotifier {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        LogNotifier { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// `(alert_id, recipient)` pairs already in the log.
    pub fn delivered_keys(&self) -> std::io::Result<HashSet<(AlertId, Recipient)>> {
        let _g = self.lock.lock();
        let file = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashSet::new()),
            Err(e) => return Err(e),
        };
        let mut out = HashSet::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if let Ok(entry) = serde_json::from_str::<AlertLogLine>(&line) {
                out.insert((entry.alert_id, entry.recipient));
            }
        }
        Ok(out)
    }
}

impl Notifier for LogNotifier {
    fn notify(&self, alert: &AlertEvent, recipient: Recipient) -> Result<(), NotifyError> {
        let line = AlertLogLine {
            alert_id: alert.alert_id.clone(),
            recipient,
            session_id: alert.session_id.clone(),
            employee_id: alert.employee_id.clone(),
            triggered_at: alert.triggered_at,
            miss_run_length: alert.miss_run_length,
        };
        let mut text = serde_json::to_string(&line).map_err(|e| NotifyError(e.to_string()))?;
        text.push('\n');
        let _g = self.lock.lock();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| NotifyError(e.to_string()))?;
        f.write_all(text.as_bytes()).map_err(|e| NotifyError(e.to_string()))?;
        f.sync_data().map_err(|e| NotifyError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered { attempts: u32 },
    AlreadyDelivered,
    DeadLettered { attempts: u32, last_error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipientDelivery {
    pub recipient: Recipient,
    #[serde(flatten)]
    pub status: DeliveryStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub alert_id: AlertId,
    pub deliveries: Vec<RecipientDelivery>,
}

impl DeliveryReceipt {
    pub fn dead_lettered(&self) -> bool {
        self.deliveries.iter().any(|d| matches!(d.status, DeliveryStatus::DeadLettered { .. }))
    }
}

/// At-least-once alert delivery keyed by `(alert_id, recipient)`.
pub struct AlertDispatcher {
    notifier: Box<dyn Notifier>,
    delivered: Mutex<HashSet<(AlertId, Recipient)>>,
    dead_letters: Mutex<Vec<(AlertEvent, Recipient, String)>>,
    max_retries: u32,
}

impl AlertDispatcher {
    pub const MAX_RETRIES: u32 = 3;

    pub fn new(notifier: Box<dyn Notifier>) -> Self {
        AlertDispatcher {
            notifier,
            delivered: Mutex::new(HashSet::new()),
            dead_letters: Mutex::new(Vec::new()),
            max_retries: Self::MAX_RETRIES,
        }
    }

    /// Seed the idempotency set, e.g. from an existing alert log.
    pub fn with_delivered(self, keys: HashSet<(AlertId, Recipient)>) -> Self {
        *self.delivered.lock() = keys;
        self
    }

    pub fn dead_letters(&self) -> Vec<(AlertEvent, Recipient, String)> {
        self.dead_letters.lock().clone()
    }

    /// Notify every recipient once. Failed attempts are retried up to three
    /// times before the delivery is dead-lettered.
    pub fn dispatch(&self, alert: &AlertEvent) -> DeliveryReceipt {
        let mut deliveries = Vec::with_capacity(alert.recipients.len());
        for &recipient in &alert.recipients {
            let key = (alert.alert_id.clone(), recipient);
            // Holding the lock across delivery keeps concurrent duplicate
            // dispatches from both sending.
            let mut delivered = self.delivered.lock();
            if delivered.contains(&key) {
                deliveries.push(RecipientDelivery { recipient, status: DeliveryStatus::AlreadyDelivered });
                continue;
            }
            let mut attempts = 0;
            let status = loop {
                attempts += 1;
                match self.notifier.notify(alert, recipient) {
                    Ok(()) => {
                        delivered.insert(key.clone());
                        break DeliveryStatus::Delivered { attempts };
                    }
                    Err(e) if attempts > self.max_retries => {
                        tracing::warn!(alert = %alert.alert_id, ?recipient, error = %e, "alert dead-lettered");
                        self.dead_letters.lock().push((alert.clone(), recipient, e.0.clone()));
                        break DeliveryStatus::DeadLettered { attempts, last_error: e.0 };
                    }
                    Err(_) => continue,
                }
            };
            deliveries.push(RecipientDelivery { recipient, status });
        }
        DeliveryReceipt { alert_id: alert.alert_id.clone(), deliveries }
    }
}

pub fn dispatch_alert(alert: &AlertEvent, dispatcher: &AlertDispatcher) -> DeliveryReceipt {
    dispatcher.dispatch(alert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn session() -> WorkSession {
        WorkSession::start("s1".into(), "e1".into(), Timestamp(0))
    }

    fn alert_positions(outcomes: &[CheckOutcome], n: u32) -> Vec<usize> {
        let cfg = TrackingConfig { n_miss: n, ..Default::default() };
        let mut s = session();
        let mut out = Vec::new();
        for (i, o) in outcomes.iter().enumerate() {
            let (next, alert) = apply_check(&s, *o, &cfg).unwrap();
            if alert {
                out.push(i);
            }
            s = next;
        }
        out
    }

    use CheckOutcome::{NoFace as A, Present as P};

    #[test]
    fn alert_on_fourth_check() {
        assert_eq!(alert_positions(&[P, A, A, A], 3), vec![3]);
    }

    #[test]
    fn short_runs_never_alert() {
        assert!(alert_positions(&[A, A, P, A, A], 3).is_empty());
    }

    #[test]
    fn long_run_alerts_once() {
        assert_eq!(alert_positions(&[A, A, A, A, A, A, P, A, A, A], 3), vec![2, 9]);
    }

    #[test]
    fn present_resets_run() {
        let cfg = TrackingConfig::default();
        let (s, _) = apply_check(&session(), A, &cfg).unwrap();
        let (s, _) = apply_check(&s, P, &cfg).unwrap();
        assert_eq!(s.miss_run, 0);
        assert_eq!(s.checks_done, 2);
    }

    #[test]
    fn ended_session_rejects_checks() {
        let s = session().end(Timestamp(5), false).unwrap();
        assert_eq!(s.ended_at, Some(Timestamp(5)));
        assert!(matches!(apply_check(&s, P, &TrackingConfig::default()), Err(TrackingError::SessionNotActive(_))));
        assert!(matches!(s.end(Timestamp(6), false), Err(TrackingError::SessionNotActive(_))));
    }

    #[test]
    fn schedule_structure() {
        let hour = 3_600_000;
        let span = Span::new(Timestamp(1_000), Timestamp(1_000 + 6 * hour));
        let times = schedule_checks(span, 6, 7).unwrap();
        assert_eq!(times.len(), 6);
        for (i, t) in times.iter().enumerate() {
            let lo = 1_000 + i as i64 * hour;
            assert!(t.0 >= lo && t.0 < lo + hour);
        }
        assert_eq!(times, schedule_checks(span, 6, 7).unwrap());
        assert_ne!(times, schedule_checks(span, 6, 8).unwrap());
    }

    #[test]
    fn schedule_single_segment_and_errors() {
        let span = Span::new(Timestamp(10), Timestamp(20));
        let t = schedule_checks(span, 1, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0].0 >= 10 && t[0].0 < 20);
        assert!(matches!(schedule_checks(Span::new(Timestamp(5), Timestamp(5)), 1, 0), Err(TrackingError::InvalidSpan(_))));
        assert!(matches!(schedule_checks(Span::new(Timestamp(5), Timestamp(3)), 1, 0), Err(TrackingError::InvalidSpan(_))));
        assert!(matches!(schedule_checks(Span::new(Timestamp(0), Timestamp(3)), 4, 0), Err(TrackingError::InvalidSpan(_))));
        assert!(schedule_checks(span, 0, 0).is_err());
    }

    #[test]
    fn schedule_segments_of_width_one_are_exact() {
        let times = schedule_checks(Span::new(Timestamp(0), Timestamp(5)), 5, 99).unwrap();
        assert_eq!(times, (0..5).map(Timestamp).collect::<Vec<_>>());
    }

    #[test]
    fn archive_filter() {
        let rec = ArchiveRecord {
            seq: 1,
            check: PresenceCheck {
                check_id: 1,
                session_id: "s1".into(),
                at: Timestamp(100),
                outcome: P,
                best_distance: Some(0.1),
                frame_ref: None,
                slot: Some(0),
            },
            employee: EmployeeSnapshot { employee_id: "e1".into(), name: "E".into(), contact: "e@x.io".into() },
        };
        assert!(ArchiveFilter::default().matches(&rec));
        assert!(ArchiveFilter { from: Some(Timestamp(100)), to: Some(Timestamp(101)), ..Default::default() }.matches(&rec));
        assert!(!ArchiveFilter { to: Some(Timestamp(100)), ..Default::default() }.matches(&rec));
        assert!(!ArchiveFilter { employee_id: Some("e2".into()), ..Default::default() }.matches(&rec));
        assert_eq!(archive_to_jsonl(&[rec.clone(), rec]).lines().count(), 2);
    }

    fn alert() -> AlertEvent {
        AlertEvent {
            alert_id: AlertId("alert-000001".into()),
            session_id: "s1".into(),
            employee_id: "e1".into(),
            triggered_at: Timestamp(42),
            miss_run_length: 3,
            recipients: vec![Recipient::Admin, Recipient::Employee],
        }
    }

    #[test]
    fn log_notifier_writes_one_line_per_recipient() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.log");
        let dispatcher = AlertDispatcher::new(Box::new(LogNotifier::new(&path)));
        let receipt = dispatch_alert(&alert(), &dispatcher);
        assert_eq!(receipt.deliveries.len(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l["alert_id"] == "alert-000001"));

        // Duplicate dispatch is a no-op.
        let again = dispatch_alert(&alert(), &dispatcher);
        assert!(again.deliveries.iter().all(|d| d.status == DeliveryStatus::AlreadyDelivered));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);

        // A fresh dispatcher seeded from the log also skips it.
        let notifier = LogNotifier::new(&path);
        let keys = notifier.delivered_keys().unwrap();
        assert_eq!(keys.len(), 2);
        let fresh = AlertDispatcher::new(Box::new(notifier)).with_delivered(keys);
        assert!(fresh.dispatch(&alert()).deliveries.iter().all(|d| d.status == DeliveryStatus::AlreadyDelivered));
    }

    /// Fails the first `failures` calls per recipient, recording successes.
    struct Flaky {
        failures: u32,
        calls: Arc<AtomicU32>,
        successes: Arc<Mutex<Vec<Recipient>>>,
        per_recipient: Mutex<std::collections::HashMap<Recipient, u32>>,
    }

    impl Notifier for Flaky {
        fn notify(&self, _alert: &AlertEvent, recipient: Recipient) -> Result<(), NotifyError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut m = self.per_recipient.lock();
            let n = m.entry(recipient).or_insert(0);
            *n += 1;
            if *n <= self.failures {
                return Err(NotifyError(format!("transient failure {n}")));
            }
            self.successes.lock().push(recipient);
            Ok(())
        }
    }

    fn flaky(failures: u32) -> (AlertDispatcher, Arc<AtomicU32>, Arc<Mutex<Vec<Recipient>>>) {
        let calls = Arc::new(AtomicU32::new(0));
        let successes = Arc::new(Mutex::new(Vec::new()));
        let n = Flaky { failures, calls: calls.clone(), successes: successes.clone(), per_recipient: Mutex::default() };
        (AlertDispatcher::new(Box::new(n)), calls, successes)
    }

    #[test]
    fn transient_failures_are_retried() {
        let (d, calls, successes) = flaky(2);
        let r = d.dispatch(&alert());
        assert!(r.deliveries.iter().all(|x| x.status == DeliveryStatus::Delivered { attempts: 3 }));
        assert_eq!(calls.load(Ordering::SeqCst), 6);
        assert_eq!(*successes.lock(), vec![Recipient::Admin, Recipient::Employee]);
        d.dispatch(&alert());
        assert_eq!(successes.lock().len(), 2);
    }

    #[test]
    fn persistent_failures_dead_letter() {
        let (d, calls, _) = flaky(10);
        let r = d.dispatch(&alert());
        assert!(r.dead_lettered());
        assert_eq!(calls.load(Ordering::SeqCst), 8);
        assert_eq!(d.dead_letters().len(), 2);
    }
}
