//! The attendance aggregate: directory, gallery, sessions, archive and
//! alerts behind one lock, with every mutation committed to a [`Journal`]
//! before it is applied in memory.

use crate::directory::{DirectoryError, EmployeeId, EmployeePatch, EmployeeRecord, Principal, Role};
use crate::embedding::Embedding;
use crate::gallery::{Gallery, GalleryEntry, GalleryError, RecognitionConfig};
use crate::imaging::{encode_png, RgbImage};
use crate::pipeline::{FacePipeline, FaceRecognition, PipelineError};
use crate::time::Timestamp;
use crate::tracking::{
    apply_check, classify_frame, derive_schedule_seed, AlertEvent, AlertId, ArchiveFilter, ArchiveRecord,
    CheckOutcome, CheckSchedule, EmployeeSnapshot, PresenceCheck, Recipient, SessionId, Span, TrackingConfig,
    TrackingError, WorkSession,
};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("journal commit failed: {0}")]
pub struct JournalError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttendanceError {
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

/// Session plus its schedule and progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: WorkSession,
    pub schedule: CheckSchedule,
    /// Index of the first scheduled check not yet filled.
    pub next_slot: u32,
    pub last_check: Option<PresenceCheck>,
}

impl SessionRecord {
    pub fn next_check_time(&self) -> Option<Timestamp> {
        self.schedule.check_times.get(self.next_slot as usize).copied()
    }
}

/// One durable state change.
#[derive(Debug, Clone, PartialEq)]
pub enum Change {
    PutEmployee(EmployeeRecord),
    DeleteEmployee { employee_id: EmployeeId, at: Timestamp },
    PutGalleryEntry(GalleryEntry),
    RemoveGalleryEntry(EmployeeId),
    PutSession(SessionRecord),
    AppendArchive(ArchiveRecord),
    PutAlert(AlertEvent),
    StoreImage { image_ref: String, png: Arc<Vec<u8>> },
}

/// Durable sink for change batches. A batch is committed entirely or not at all.
pub trait Journal: Send + Sync {
    fn commit(&self, changes: &[Change]) -> Result<(), JournalError>;
}

/// Keeps nothing; state lives only in memory.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullJournal;

impl Journal for NullJournal {
    fn commit(&self, _changes: &[Change]) -> Result<(), JournalError> {
        Ok(())
    }
}

/// Everything the aggregate holds. Constructible from persisted rows.
#[derive(Debug, Clone, Default)]
pub struct AttendanceState {
    pub employees: BTreeMap<EmployeeId, EmployeeRecord>,
    /// Ids of deleted employees; never reused.
    pub deleted: BTreeSet<EmployeeId>,
    pub gallery: Gallery,
    pub sessions: BTreeMap<SessionId, SessionRecord>,
    pub archive: Vec<ArchiveRecord>,
    pub alerts: BTreeMap<AlertId, AlertEvent>,
}

impl AttendanceState {
    fn apply(&mut self, change: &Change) {
        match change {
            Change::PutEmployee(r) => {
                self.employees.insert(r.employee_id.clone(), r.clone());
            }
            Change::DeleteEmployee { employee_id, .. } => {
                self.employees.remove(employee_id);
                self.deleted.insert(employee_id.clone());
            }
            Change::PutGalleryEntry(e) => {
                self.gallery.upsert(e.clone()).expect("validated before commit");
            }
            Change::RemoveGalleryEntry(id) => {
                let _ = self.gallery.unenroll(id);
            }
            Change::PutSession(s) => {
                self.sessions.insert(s.session.session_id.clone(), s.clone());
            }
            Change::AppendArchive(r) => self.archive.push(r.clone()),
            Change::PutAlert(a) => {
                self.alerts.insert(a.alert_id.clone(), a.clone());
            }
            Change::StoreImage { .. } => {}
        }
    }

    fn active_session_of(&self, employee: &EmployeeId) -> Option<&SessionRecord> {
        self.sessions.values().find(|s| s.session.is_active() && &s.session.employee_id == employee)
    }

    fn next_archive_seq(&self) -> u64 {
        self.archive.last().map_or(1, |r| r.seq + 1)
    }
}

/// Result of recording one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCheck {
    pub session: WorkSession,
    pub check: PresenceCheck,
    pub alert: Option<AlertEvent>,
    pub archive_seq: u64,
}

/// Result of a frame submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub faces: Vec<FaceRecognition>,
    #[serde(flatten)]
    pub recorded: RecordedCheck,
}

/// Draft of a check before it receives an id and slot.
#[derive(Debug, Clone)]
pub struct CheckInput {
    pub at: Timestamp,
    pub outcome: CheckOutcome,
    pub best_distance: Option<f64>,
    /// PNG bytes of the frame, kept according to the tracking config.
    pub frame_png: Option<Arc<Vec<u8>>>,
}

/// New images for an employee, already decoded.
pub type EnrollmentImages<'a> = &'a [RgbImage];

pub struct Attendance {
    state: RwLock<AttendanceState>,
    journal: Box<dyn Journal>,
    pipeline: FacePipeline,
    pub recognition: RecognitionConfig,
    pub tracking: TrackingConfig,
}

impl std::fmt::Debug for Attendance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Attendance").field("pipeline", &self.pipeline).finish_non_exhaustive()
    }
}

impl Attendance {
    pub fn new(
        state: AttendanceState,
        journal: Box<dyn Journal>,
        pipeline: FacePipeline,
        recognition: RecognitionConfig,
        tracking: TrackingConfig,
    ) -> Result<Self, AttendanceError> {
        recognition.validate()?;
        tracking.validate()?;
        Ok(Attendance { state: RwLock::new(state), journal, pipeline, recognition, tracking })
    }

    /// Empty, unpersisted instance with the given pipeline and default configs.
    pub fn in_memory(pipeline: FacePipeline) -> Self {
        Self::new(
            AttendanceState::default(),
            Box::new(NullJournal),
            pipeline,
            RecognitionConfig::default(),
            TrackingConfig::default(),
        )
        .expect("default configs are valid")
    }

    pub fn pipeline(&self) -> &FacePipeline {
        &self.pipeline
    }

    /// Read access to the whole state.
    pub fn with_state<R>(&self, f: impl FnOnce(&AttendanceState) -> R) -> R {
        f(&self.state.read())
    }

    pub fn gallery_revision(&self) -> u64 {
        self.state.read().gallery.revision()
    }

    fn commit(&self, state: &mut AttendanceState, changes: Vec<Change>) -> Result<(), AttendanceError> {
        self.journal.commit(&changes)?;
        for c in &changes {
            state.apply(c);
        }
        Ok(())
    }

    fn embed_enrollment(&self, images: EnrollmentImages<'_>) -> Result<Vec<Embedding>, AttendanceError> {
        if images.is_empty() {
            return Err(DirectoryError::EnrollmentFailed("at least one enrollment image is required".into()).into());
        }
        images
            .iter()
            .enumerate()
            .map(|(i, img)| match self.pipeline.embed_primary_face(img) {
                Ok((_, e)) => Ok(e),
                Err(PipelineError::NoFace) => {
                    Err(DirectoryError::EnrollmentFailed(format!("no face found in image {i}")).into())
                }
                Err(PipelineError::Detection(e)) => {
                    Err(DirectoryError::EnrollmentFailed(format!("image {i}: {e}")).into())
                }
                Err(e) => Err(e.into()),
            })
            .collect()
    }

    fn image_changes(id: &EmployeeId, revision: u64, images: EnrollmentImages<'_>) -> (Vec<String>, Vec<Change>) {
        let mut refs = Vec::with_capacity(images.len());
        let mut changes = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let image_ref = format!("enroll-{id}-{revision}-{i}");
            refs.push(image_ref.clone());
            changes.push(Change::StoreImage { image_ref, png: Arc::new(encode_png(img)) });
        }
        (refs, changes)
    }

    // Directory.

    pub fn add_employee(
        &self,
        caller: &Principal,
        mut record: EmployeeRecord,
        images: EnrollmentImages<'_>,
        now: Timestamp,
    ) -> Result<EmployeeRecord, AttendanceError> {
        caller.require_admin()?;
        record.validate()?;
        if !record.active {
            return Err(DirectoryError::Validation("new employees must be active".into()).into());
        }
        {
            let st = self.state.read();
            if st.employees.contains_key(&record.employee_id) || st.deleted.contains(&record.employee_id) {
                return Err(DirectoryError::AlreadyExists(record.employee_id).into());
            }
        }
        let embeddings = self.embed_enrollment(images)?;
        let mut st = self.state.write();
        if st.employees.contains_key(&record.employee_id) || st.deleted.contains(&record.employee_id) {
            return Err(DirectoryError::AlreadyExists(record.employee_id).into());
        }
        let (refs, mut changes) = Self::image_changes(&record.employee_id, st.gallery.revision() + 1, images);
        record.enrollment_image_refs = refs;
        changes.push(Change::PutEmployee(record.clone()));
        changes.push(Change::PutGalleryEntry(GalleryEntry {
            person_id: record.employee_id.clone(),
            embeddings,
            enrolled_at: now,
        }));
        self.commit(&mut st, changes)?;
        tracing::info!(employee = %record.employee_id, "employee added");
        Ok(record)
    }

    /// Add many employees from a CSV import, each enrolled from its own images.
    pub fn import_employees(
        &self,
        caller: &Principal,
        rows: Vec<(EmployeeRecord, Vec<RgbImage>)>,
        now: Timestamp,
    ) -> Result<Vec<EmployeeRecord>, AttendanceError> {
        rows.into_iter().map(|(r, imgs)| self.add_employee(caller, r, &imgs, now)).collect()
    }

    pub fn update_employee(
        &self,
        caller: &Principal,
        id: &EmployeeId,
        patch: &EmployeePatch,
        new_images: Option<EnrollmentImages<'_>>,
        now: Timestamp,
    ) -> Result<EmployeeRecord, AttendanceError> {
        caller.require_admin()?;
        let preview = patch.apply_to(&self.get_employee_unchecked(id)?)?;
        if new_images.is_some() && !preview.active {
            return Err(DirectoryError::Validation("cannot enroll images for an inactive employee".into()).into());
        }
        let embeddings = new_images.map(|imgs| self.embed_enrollment(imgs)).transpose()?;

        let mut st = self.state.write();
        // Re-apply against the record as of now so concurrent patches compose.
        let current = st.employees.get(id).cloned().ok_or_else(|| DirectoryError::NotFound(id.clone()))?;
        let mut updated = patch.apply_to(&current)?;
        if new_images.is_some() && !updated.active {
            return Err(DirectoryError::Validation("cannot enroll images for an inactive employee".into()).into());
        }
        let mut changes = Vec::new();
        if let (Some(embeddings), Some(imgs)) = (embeddings, new_images) {
            let (refs, img_changes) = Self::image_changes(id, st.gallery.revision() + 1, imgs);
            updated.enrollment_image_refs = refs;
            changes.extend(img_changes);
            changes.push(Change::PutGalleryEntry(GalleryEntry { person_id: id.clone(), embeddings, enrolled_at: now }));
        }
        if !updated.active && st.gallery.contains(id) {
            changes.push(Change::RemoveGalleryEntry(id.clone()));
        }
        changes.insert(0, Change::PutEmployee(updated.clone()));
        self.commit(&mut st, changes)?;
        Ok(updated)
    }

    /// Remove the record, purge its gallery entry and force-end active
    /// sessions. Archive records are kept.
    pub fn delete_employee(&self, caller: &Principal, id: &EmployeeId, now: Timestamp) -> Result<(), AttendanceError> {
        caller.require_admin()?;
        let mut st = self.state.write();
        if !st.employees.contains_key(id) {
            return Err(DirectoryError::NotFound(id.clone()).into());
        }
        let mut changes = vec![Change::DeleteEmployee { employee_id: id.clone(), at: now }];
        if st.gallery.contains(id) {
            changes.push(Change::RemoveGalleryEntry(id.clone()));
        }
        for rec in st.sessions.values().filter(|s| s.session.is_active() && &s.session.employee_id == id) {
            let mut r = rec.clone();
            r.session = r.session.end(now, true)?;
            changes.push(Change::PutSession(r));
        }
        self.commit(&mut st, changes)?;
        tracing::info!(employee = %id, "employee deleted");
        Ok(())
    }

    fn get_employee_unchecked(&self, id: &EmployeeId) -> Result<EmployeeRecord, AttendanceError> {
        self.state.read().employees.get(id).cloned().ok_or_else(|| DirectoryError::NotFound(id.clone()).into())
    }

    /// Admins see any record; employees only their own.
    pub fn get_employee(&self, caller: &Principal, id: &EmployeeId) -> Result<EmployeeRecord, AttendanceError> {
        if caller.role != Role::Admin && caller.id != id.as_str() {
            return Err(DirectoryError::PermissionDenied("employees may only read their own record".into()).into());
        }
        self.get_employee_unchecked(id)
    }

    /// All records sorted by id.
    pub fn list_employees(&self, caller: &Principal) -> Result<Vec<EmployeeRecord>, AttendanceError> {
        caller.require_admin()?;
        Ok(self.state.read().employees.values().cloned().collect())
    }

    // Sessions.

    fn owner_check(caller: &Principal, session: &WorkSession) -> Result<(), TrackingError> {
        if caller.id == session.employee_id.as_str() {
            Ok(())
        } else {
            Err(TrackingError::PermissionDenied(format!("session {} belongs to another employee", session.session_id)))
        }
    }

    /// Start a session for the calling employee with a schedule over
    /// `[now, now + planned_duration_ms)`.
    pub fn start_session(
        &self,
        caller: &Principal,
        employee_id: &EmployeeId,
        now: Timestamp,
        planned_duration_ms: i64,
        seed: Option<u64>,
    ) -> Result<SessionRecord, AttendanceError> {
        if caller.id != employee_id.as_str() {
            return Err(TrackingError::PermissionDenied("sessions are started by the employee".into()).into());
        }
        let mut st = self.state.write();
        match st.employees.get(employee_id) {
            Some(r) if r.active => {}
            _ => return Err(TrackingError::EmployeeNotFound(employee_id.clone()).into()),
        }
        if st.active_session_of(employee_id).is_some() {
            return Err(TrackingError::SessionExists(employee_id.clone()).into());
        }
        let n = st.sessions.len() as u64 + 1;
        let session_id = SessionId(format!("sess-{n:06}"));
        let seed = seed.unwrap_or_else(|| derive_schedule_seed(self.tracking.schedule_seed, n));
        let span = Span::new(now, now.plus_millis(planned_duration_ms));
        let schedule = CheckSchedule::generate(session_id.clone(), span, self.tracking.segment_count, seed)?;
        let rec = SessionRecord {
            session: WorkSession::start(session_id, employee_id.clone(), now),
            schedule,
            next_slot: 0,
            last_check: None,
        };
        self.commit(&mut st, vec![Change::PutSession(rec.clone())])?;
        Ok(rec)
    }

    /// Admins see any session; employees their own.
    pub fn get_session(&self, caller: &Principal, id: &SessionId) -> Result<SessionRecord, AttendanceError> {
        let st = self.state.read();
        let rec = st.sessions.get(id).ok_or_else(|| TrackingError::SessionNotFound(id.clone()))?;
        if caller.role != Role::Admin {
            Self::owner_check(caller, &rec.session)?;
        }
        Ok(rec.clone())
    }

    pub fn list_sessions(&self, caller: &Principal) -> Result<Vec<SessionRecord>, AttendanceError> {
        let st = self.state.read();
        match caller.role {
            Role::Admin => Ok(st.sessions.values().cloned().collect()),
            Role::Employee => {
                Ok(st.sessions.values().filter(|s| s.session.employee_id.as_str() == caller.id).cloned().collect())
            }
            Role::Auditor => Err(TrackingError::PermissionDenied("auditors cannot list sessions".into()).into()),
        }
    }

    pub fn end_session(&self, caller: &Principal, id: &SessionId, now: Timestamp) -> Result<WorkSession, AttendanceError> {
        let mut st = self.state.write();
        let rec = st.sessions.get(id).ok_or_else(|| TrackingError::SessionNotFound(id.clone()))?;
        Self::owner_check(caller, &rec.session)?;
        let mut rec = rec.clone();
        rec.session = rec.session.end(now, false)?;
        let session = rec.session.clone();
        self.commit(&mut st, vec![Change::PutSession(rec)])?;
        Ok(session)
    }

    /// Run recognition on a frame and record the resulting check.
    ///
    /// Detection and embedding run without holding the state lock;
    /// identification runs against the gallery as of the commit.
    pub fn submit_frame(
        &self,
        caller: &Principal,
        session_id: &SessionId,
        image: &RgbImage,
        now: Timestamp,
    ) -> Result<FrameResult, AttendanceError> {
        {
            let st = self.state.read();
            let rec = st.sessions.get(session_id).ok_or_else(|| TrackingError::SessionNotFound(session_id.clone()))?;
            Self::owner_check(caller, &rec.session)?;
            if !rec.session.is_active() {
                return Err(TrackingError::SessionNotActive(session_id.clone()).into());
            }
        }
        let embedded = self.pipeline.embed_faces(image)?;
        let mut st = self.state.write();
        let faces = embedded
            .into_iter()
            .map(|(detection, e)| {
                let identification = st.gallery.identify(&e, &self.recognition)?;
                Ok(FaceRecognition { detection, identification })
            })
            .collect::<Result<Vec<_>, GalleryError>>()?;
        let employee = st
            .sessions
            .get(session_id)
            .map(|r| r.session.employee_id.clone())
            .ok_or_else(|| TrackingError::SessionNotFound(session_id.clone()))?;
        let (outcome, best_distance) = classify_frame(&faces, &employee);
        let keep = !outcome.is_present() || self.tracking.store_present_frames;
        let frame_png = keep.then(|| Arc::new(encode_png(image)));
        let input = CheckInput { at: now, outcome, best_distance, frame_png };
        let recorded = self.record_locked(&mut st, session_id, input)?;
        Ok(FrameResult { faces, recorded })
    }

    /// Record a check with a known outcome against an active session.
    pub fn record_check(&self, session_id: &SessionId, input: CheckInput) -> Result<RecordedCheck, AttendanceError> {
        let mut st = self.state.write();
        self.record_locked(&mut st, session_id, input)
    }

    fn record_locked(
        &self,
        st: &mut AttendanceState,
        session_id: &SessionId,
        input: CheckInput,
    ) -> Result<RecordedCheck, AttendanceError> {
        let rec = st.sessions.get(session_id).ok_or_else(|| TrackingError::SessionNotFound(session_id.clone()))?;
        let (session, alert_due) = apply_check(&rec.session, input.outcome, &self.tracking)?;
        let seq = st.next_archive_seq();
        let mut changes = Vec::with_capacity(4);
        let frame_ref = input.frame_png.map(|png| {
            let image_ref = format!("frame-{seq:08}");
            changes.push(Change::StoreImage { image_ref: image_ref.clone(), png });
            image_ref
        });
        let slot = (rec.next_slot as usize) < rec.schedule.check_times.len();
        let check = PresenceCheck {
            check_id: seq,
            session_id: session_id.clone(),
            at: input.at,
            outcome: input.outcome,
            best_distance: input.best_distance,
            frame_ref,
            slot: slot.then_some(rec.next_slot),
        };
        let employee = match st.employees.get(&session.employee_id) {
            Some(r) => EmployeeSnapshot::from(r),
            None => EmployeeSnapshot { employee_id: session.employee_id.clone(), name: String::new(), contact: String::new() },
        };
        let archive = ArchiveRecord { seq, check: check.clone(), employee };
        let alert = alert_due.then(|| AlertEvent {
            alert_id: AlertId(format!("alert-{:06}", st.alerts.len() + 1)),
            session_id: session_id.clone(),
            employee_id: session.employee_id.clone(),
            triggered_at: input.at,
            miss_run_length: session.miss_run,
            recipients: vec![Recipient::Admin, Recipient::Employee],
        });
        let updated = SessionRecord {
            session: session.clone(),
            schedule: rec.schedule.clone(),
            next_slot: rec.next_slot + u32::from(slot),
            last_check: Some(check.clone()),
        };
        changes.push(Change::PutSession(updated));
        changes.push(Change::AppendArchive(archive));
        if let Some(a) = &alert {
            changes.push(Change::PutAlert(a.clone()));
        }
        self.commit(st, changes)?;
        if let Some(a) = &alert {
            tracing::info!(alert = %a.alert_id, employee = %a.employee_id, "consecutive-miss alert raised");
        }
        Ok(RecordedCheck { session, check, alert, archive_seq: seq })
    }

    /// Record `no_face` for every scheduled check whose grace window has
    /// passed without an upload.
    pub fn sweep_missed_checks(&self, now: Timestamp) -> Result<Vec<RecordedCheck>, AttendanceError> {
        let grace = i64::from(self.tracking.grace_secs) * 1000;
        let mut st = self.state.write();
        let mut out = Vec::new();
        let ids: Vec<SessionId> = st.sessions.iter().filter(|(_, r)| r.session.is_active()).map(|(k, _)| k.clone()).collect();
        for id in ids {
            while let Some(t) = st.sessions[&id].next_check_time() {
                let due = t.plus_millis(grace);
                if due > now {
                    break;
                }
                let input = CheckInput { at: due, outcome: CheckOutcome::NoFace, best_distance: None, frame_png: None };
                out.push(self.record_locked(&mut st, &id, input)?);
            }
        }
        Ok(out)
    }

    // Gallery transfer.

    /// The gallery as JSON lines (admin only).
    pub fn export_gallery(&self, caller: &Principal) -> Result<String, AttendanceError> {
        caller.require_admin()?;
        Ok(self.state.read().gallery.export_jsonl())
    }

    /// Replace the gallery entries of the listed employees in one batch.
    /// Every entry must belong to an active employee.
    pub fn import_gallery(&self, caller: &Principal, entries: Vec<GalleryEntry>) -> Result<usize, AttendanceError> {
        caller.require_admin()?;
        let mut st = self.state.write();
        let mut seen = BTreeSet::new();
        for e in &entries {
            match st.employees.get(&e.person_id) {
                Some(r) if r.active => {}
                _ => return Err(DirectoryError::NotFound(e.person_id.clone()).into()),
            }
            if e.embeddings.is_empty() {
                return Err(GalleryError::NoEmbeddings.into());
            }
            if !seen.insert(e.person_id.clone()) {
                return Err(DirectoryError::Validation(format!("{} appears twice in the import", e.person_id)).into());
            }
        }
        let n = entries.len();
        self.commit(&mut st, entries.into_iter().map(Change::PutGalleryEntry).collect())?;
        Ok(n)
    }

    // Archive and alerts.

    /// Auditors read everything, employees their own records, admins nothing.
    pub fn query_archive(&self, caller: &Principal, filter: &ArchiveFilter) -> Result<Vec<ArchiveRecord>, AttendanceError> {
        let mut filter = filter.clone();
        match caller.role {
            Role::Admin => {
                return Err(TrackingError::PermissionDenied("admins may not read the archive".into()).into());
            }
            Role::Employee => {
                let own = EmployeeId::new(caller.id.clone());
                if filter.employee_id.as_ref().is_some_and(|e| *e != own) {
                    return Err(TrackingError::PermissionDenied("employees may only read their own records".into()).into());
                }
                filter.employee_id = Some(own);
            }
            Role::Auditor => {}
        }
        Ok(self.state.read().archive.iter().filter(|r| filter.matches(r)).cloned().collect())
    }

    /// Admins see every alert, employees alerts about themselves.
    pub fn list_alerts(&self, caller: &Principal) -> Result<Vec<AlertEvent>, AttendanceError> {
        let st = self.state.read();
        match caller.role {
            Role::Admin => Ok(st.alerts.values().cloned().collect()),
            Role::Employee => Ok(st.alerts.values().filter(|a| a.employee_id.as_str() == caller.id).cloned().collect()),
            Role::Auditor => Err(TrackingError::PermissionDenied("auditors do not receive alerts".into()).into()),
        }
    }
}
