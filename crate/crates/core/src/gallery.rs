//! Enrolled identity embeddings and KNN identification with unknown
//! rejection.
//!
//! The gallery is a plain linear scan. Enrolling or removing a person takes
//! effect for the very next query; there is no index to rebuild and nothing
//! to retrain.

use crate::embedding::{squared_l2_distance, Embedding};
use crate::time::Timestamp;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub String);

impl PersonId {
    pub fn new(id: impl Into<String>) -> Self {
        PersonId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(s: &str) -> Self {
        PersonId(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalleryError {
    #[error("person {0} is already enrolled")]
    AlreadyEnrolled(PersonId),
    #[error("person {0} is not enrolled")]
    NotEnrolled(PersonId),
    #[error("an enrollment needs at least one embedding")]
    NoEmbeddings,
    #[error("invalid recognition config: {0}")]
    InvalidConfig(String),
    #[error("gallery line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub person_id: PersonId,
    pub embeddings: Vec<Embedding>,
    pub enrolled_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognitionConfig {
    pub k: usize,
    /// Squared-L2 rejection threshold.
    pub tau: f64,
}

/// Reference squared-L2 threshold; deployments calibrate their own.
pub const DEFAULT_TAU: f64 = 1.24;

impl Default for RecognitionConfig {
    fn default() -> Self {
        RecognitionConfig { k: 3, tau: DEFAULT_TAU }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<(), GalleryError> {
        if self.k == 0 {
            return Err(GalleryError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(GalleryError::InvalidConfig(format!("tau must be finite and non-negative, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "person_id", rename_all = "snake_case")]
pub enum Decision {
    Person(PersonId),
    Unknown,
}

impl Decision {
    pub fn person(&self) -> Option<&PersonId> {
        match self {
            Decision::Person(p) => Some(p),
            Decision::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub person_id: PersonId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    /// The k nearest gallery embeddings, ascending by distance.
    pub candidates: Vec<Neighbor>,
    pub decision: Decision,
}

impl IdentificationResult {
    pub fn nearest_distance(&self) -> Option<f64> {
        self.candidates.first().map(|n| n.distance)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gallery {
    entries: BTreeMap<PersonId, GalleryEntry>,
    revision: u64,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedding_count(&self) -> usize {
        self.entries.values().map(|e| e.embeddings.len()).sum()
    }

    /// Bumped on every successful mutation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, id: &PersonId) -> Option<&GalleryEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &PersonId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &GalleryEntry> {
        self.entries.values()
    }

    pub fn enroll(
        &mut self,
        person_id: PersonId,
        embeddings: Vec<Embedding>,
        enrolled_at: Timestamp,
    ) -> Result<&GalleryEntry, GalleryError> {
        if self.entries.contains_key(&person_id) {
            return Err(GalleryError::AlreadyEnrolled(person_id));
        }
        if embeddings.is_empty() {
            return Err(GalleryError::NoEmbeddings);
        }
        self.revision += 1;
        let entry = GalleryEntry { person_id: person_id.clone(), embeddings, enrolled_at };
        Ok(self.entries.entry(person_id).or_insert(entry))
    }

    pub fn unenroll(&mut self, person_id: &PersonId) -> Result<GalleryEntry, GalleryError> {
        let removed = self
            .entries
            .remove(person_id)
            .ok_or_else(|| GalleryError::NotEnrolled(person_id.clone()))?;
        self.revision += 1;
        Ok(removed)
    }

    /// Swap a person's embeddings; equivalent to unenroll followed by enroll.
    pub fn replace(
        &mut self,
        person_id: &PersonId,
        embeddings: Vec<Embedding>,
        enrolled_at: Timestamp,
    ) -> Result<&GalleryEntry, GalleryError> {
        if !self.entries.contains_key(person_id) {
            return Err(GalleryError::NotEnrolled(person_id.clone()));
        }
        if embeddings.is_empty() {
            return Err(GalleryError::NoEmbeddings);
        }
        self.entries.remove(person_id);
        self.enroll(person_id.clone(), embeddings, enrolled_at)
    }

    /// Insert or overwrite an entry (used when restoring persisted state).
    pub fn upsert(&mut self, entry: GalleryEntry) -> Result<(), GalleryError> {
        if entry.embeddings.is_empty() {
            return Err(GalleryError::NoEmbeddings);
        }
        self.revision += 1;
        self.entries.insert(entry.person_id.clone(), entry);
        Ok(())
    }

    /// KNN identification over individual gallery embeddings.
    ///
    /// Neighbors are ordered by distance, then person id, then the embedding's
    /// position within its entry, so results never depend on insertion order.
    /// The decision is the majority label among the k nearest; ties go to the
    /// smaller mean distance, then the lexicographically smaller id. If the
    /// single nearest distance exceeds `tau` the decision is `Unknown`.
    pub fn identify(&self, query: &Embedding, config: &RecognitionConfig) -> Result<IdentificationResult, GalleryError> {
        config.validate()?;
        let mut scored: Vec<(f64, &PersonId, usize)> = self
            .entries
            .values()
            .flat_map(|e| {
                e.embeddings
                    .iter()
                    .enumerate()
                    .map(move |(i, emb)| (squared_l2_distance(query, emb), &e.person_id, i))
            })
            .collect();
        if scored.is_empty() {
            return Ok(IdentificationResult { candidates: Vec::new(), decision: Decision::Unknown });
        }
        let k = config.k.min(scored.len());
        let cmp = |a: &(f64, &PersonId, usize), b: &(f64, &PersonId, usize)| {
            a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);

        let candidates: Vec<Neighbor> = scored
            .iter()
            .map(|(d, p, _)| Neighbor { person_id: (*p).clone(), distance: *d })
            .collect();

        if candidates[0].distance > config.tau {
            return Ok(IdentificationResult { candidates, decision: Decision::Unknown });
        }

        // (votes, distance sum) per label
        let mut tally: BTreeMap<&PersonId, (usize, f64)> = BTreeMap::new();
        for (d, p, _) in &scored {
            let t = tally.entry(*p).or_insert((0, 0.0));
            t.0 += 1;
            t.1 += d;
        }
        let winner = tally
            .iter()
            .min_by(|(ida, (va, sa)), (idb, (vb, sb))| {
                vb.cmp(va)
                    .then_with(|| (sa / *va as f64).total_cmp(&(sb / *vb as f64)))
                    .then_with(|| ida.cmp(idb))
            })
            .map(|(id, _)| (*id).clone())
            .expect("k >= 1 neighbors");
        Ok(IdentificationResult { candidates, decision: Decision::Person(winner) })
    }

    /// One JSON object per line, ordered by person id.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).expect("gallery entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn import_jsonl(text: &str) -> Result<Gallery, GalleryError> {
        let mut gallery = Gallery::new();
        for entry in parse_gallery_jsonl(text)? {
            let id = entry.person_id.clone();
            gallery
                .enroll(entry.person_id, entry.embeddings, entry.enrolled_at)
                .map_err(|e| GalleryError::Malformed { line: 0, message: format!("{id}: {e}") })?;
        }
        Ok(gallery)
    }
}

/// Parse gallery JSON lines. Blank lines are skipped.
pub fn parse_gallery_jsonl(text: &str) -> Result<Vec<GalleryEntry>, GalleryError> {
    let mut out: Vec<GalleryEntry> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: GalleryEntry = serde_json::from_str(line)
            .map_err(|e| GalleryError::Malformed { line: line_no, message: e.to_string() })?;
        if entry.embeddings.is_empty() {
            return Err(GalleryError::Malformed { line: line_no, message: "entry has no embeddings".into() });
        }
        if !seen.insert(entry.person_id.clone()) {
            return Err(GalleryError::Malformed {
                line: line_no,
                message: format!("duplicate person id {}", entry.person_id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

/// A gallery shared between concurrent readers and exclusive writers.
/// Readers that race a writer see either the state before or after it.
#[derive(Debug, Default)]
pub struct SharedGallery {
    inner: RwLock<Gallery>,
}

impl SharedGallery {
    pub fn new(gallery: Gallery) -> Self {
        SharedGallery { inner: RwLock::new(gallery) }
    }

    pub fn identify(&self, query: &Embedding, config: &RecognitionConfig) -> Result<IdentificationResult, GalleryError> {
        self.inner.read().identify(query, config)
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, Gallery> {
        self.inner.read()
    }

    pub fn write(&self) -> parking_lot::RwLockWriteGuard<'_, Gallery> {
        self.inner.write()
    }
}
