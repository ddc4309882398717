//! SQLite persistence. The store is the attendance journal: each change
//! batch is one transaction, and the full state is reloaded from it on start.

use parking_lot::Mutex;
use presenzia_core::attendance::{AttendanceState, Change, Journal, JournalError, SessionRecord};
use presenzia_core::directory::{EmployeeId, EmployeeRecord, Principal, Role};
use presenzia_core::embedding::Embedding;
use presenzia_core::gallery::GalleryEntry;
use presenzia_core::time::Timestamp;
use presenzia_core::tracking::{AlertEvent, ArchiveRecord};
use rusqlite::{params, Connection, OptionalExtension};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("corrupt row in {table}: {message}")]
    Corrupt { table: &'static str, message: String },
}

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS employees (
    employee_id TEXT PRIMARY KEY,
    record      TEXT,
    deleted_at  INTEGER
);
CREATE TABLE IF NOT EXISTS gallery_embeddings (
    employee_id TEXT NOT NULL REFERENCES employees(employee_id),
    ordinal     INTEGER NOT NULL,
    embedding   BLOB NOT NULL,
    enrolled_at INTEGER NOT NULL,
    PRIMARY KEY (employee_id, ordinal)
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id  TEXT PRIMARY KEY,
    employee_id TEXT NOT NULL REFERENCES employees(employee_id),
    status      TEXT NOT NULL,
    record      TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS checks (
    check_id   INTEGER PRIMARY KEY,
    session_id TEXT NOT NULL REFERENCES sessions(session_id),
    at         INTEGER NOT NULL,
    outcome    TEXT NOT NULL,
    record     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS archive (
    seq         INTEGER PRIMARY KEY,
    employee_id TEXT NOT NULL,
    at          INTEGER NOT NULL,
    record      TEXT NOT NULL
);
CREATE TRIGGER IF NOT EXISTS archive_no_update BEFORE UPDATE ON archive
BEGIN SELECT RAISE(ABORT, 'archive is append-only'); END;
CREATE TRIGGER IF NOT EXISTS archive_no_delete BEFORE DELETE ON archive
BEGIN SELECT RAISE(ABORT, 'archive is append-only'); END;
CREATE TABLE IF NOT EXISTS alerts (
    alert_id    TEXT PRIMARY KEY,
    session_id  TEXT NOT NULL REFERENCES sessions(session_id),
    employee_id TEXT NOT NULL,
    record      TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tokens (
    token_hash   TEXT PRIMARY KEY,
    principal_id TEXT NOT NULL,
    role         TEXT NOT NULL,
    created_at   INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS images (
    image_ref TEXT PRIMARY KEY,
    png       BLOB NOT NULL
);
"#;

/// Handle to the SQLite file. Cheap to clone.
#[derive(Clone)]
pub struct Store {
    conn: Arc<Mutex<Connection>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("domain types serialize")
}

fn parse<T: serde::de::DeserializeOwned>(table: &'static str, s: &str) -> Result<T, StoreError> {
    serde_json::from_str(s).map_err(|e| StoreError::Corrupt { table, message: e.to_string() })
}

/// Tokens are stored as SHA-256 digests, never in clear.
/// Gallery embeddings are kept as 128 little-endian f64 values so a reload is bit-exact.
fn embedding_blob(e: &Embedding) -> Vec<u8> {
    e.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn embedding_from_blob(blob: &[u8]) -> Result<Embedding, presenzia_core::embedding::EmbeddingError> {
    if blob.len() != presenzia_core::embedding::EMBEDDING_DIM * 8 {
        return Err(presenzia_core::embedding::EmbeddingError::Malformed(format!("blob of {} bytes", blob.len())));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Embedding::from_values(&values)
}

pub fn token_digest(token: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(token.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn: Arc::new(Mutex::new(conn)) })
    }

    /// Rebuild the in-memory state from the tables.
    pub fn load_state(&self) -> Result<AttendanceState, StoreError> {
        let conn = self.conn.lock();
        let mut st = AttendanceState::default();

        let mut q = conn.prepare("SELECT employee_id, record, deleted_at FROM employees ORDER BY employee_id")?;
        let rows = q.query_map([], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, Option<String>>(1)?, r.get::<_, Option<i64>>(2)?))
        })?;
        for row in rows {
            let (id, record, deleted_at) = row?;
            match (record, deleted_at) {
                (_, Some(_)) => {
                    st.deleted.insert(EmployeeId::new(id));
                }
                (Some(rec), None) => {
                    let rec: EmployeeRecord = parse("employees", &rec)?;
                    st.employees.insert(rec.employee_id.clone(), rec);
                }
                (None, None) => {
                    return Err(StoreError::Corrupt { table: "employees", message: format!("{id} has no record") })
                }
            }
        }

        let mut q = conn.prepare(
            "SELECT employee_id, embedding, enrolled_at FROM gallery_embeddings ORDER BY employee_id, ordinal",
        )?;
        let rows = q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, Vec<u8>>(1)?, r.get::<_, i64>(2)?)))?;
        let mut entries: Vec<GalleryEntry> = Vec::new();
        for row in rows {
            let (id, blob, at) = row?;
            let e = embedding_from_blob(&blob)
                .map_err(|e| StoreError::Corrupt { table: "gallery_embeddings", message: e.to_string() })?;
            match entries.last_mut() {
                Some(entry) if entry.person_id.as_str() == id => entry.embeddings.push(e),
                _ => entries.push(GalleryEntry { person_id: EmployeeId::new(id), embeddings: vec![e], enrolled_at: Timestamp(at) }),
            }
        }
        for entry in entries {
            st.gallery
                .upsert(entry)
                .map_err(|e| StoreError::Corrupt { table: "gallery_embeddings", message: e.to_string() })?;
        }

        let mut q = conn.prepare("SELECT record FROM sessions")?;
        for rec in q.query_map([], |r| r.get::<_, String>(0))? {
            let rec: SessionRecord = parse("sessions", &rec?)?;
            st.sessions.insert(rec.session.session_id.clone(), rec);
        }

        let mut q = conn.prepare("SELECT record FROM archive ORDER BY seq")?;
        for rec in q.query_map([], |r| r.get::<_, String>(0))? {
            st.archive.push(parse::<ArchiveRecord>("archive", &rec?)?);
        }

        let mut q = conn.prepare("SELECT record FROM alerts")?;
        for rec in q.query_map([], |r| r.get::<_, String>(0))? {
            let a: AlertEvent = parse("alerts", &rec?)?;
            st.alerts.insert(a.alert_id.clone(), a);
        }
        Ok(st)
    }

    fn apply(tx: &rusqlite::Transaction<'_>, change: &Change) -> rusqlite::Result<()> {
        match change {
            Change::PutEmployee(r) => {
                tx.execute(
                    "INSERT INTO employees (employee_id, record, deleted_at) VALUES (?1, ?2, NULL)
                     ON CONFLICT(employee_id) DO UPDATE SET record = excluded.record",
                    params![r.employee_id.as_str(), json(r)],
                )?;
            }
            Change::DeleteEmployee { employee_id, at } => {
                tx.execute(
                    "INSERT INTO employees (employee_id, record, deleted_at) VALUES (?1, NULL, ?2)
                     ON CONFLICT(employee_id) DO UPDATE SET record = NULL, deleted_at = excluded.deleted_at",
                    params![employee_id.as_str(), at.0],
                )?;
            }
            Change::PutGalleryEntry(e) => {
                tx.execute("DELETE FROM gallery_embeddings WHERE employee_id = ?1", [e.person_id.as_str()])?;
                let mut ins = tx.prepare_cached(
                    "INSERT INTO gallery_embeddings (employee_id, ordinal, embedding, enrolled_at) VALUES (?1, ?2, ?3, ?4)",
                )?;
                for (i, emb) in e.embeddings.iter().enumerate() {
                    ins.execute(params![e.person_id.as_str(), i as i64, embedding_blob(emb), e.enrolled_at.0])?;
                }
            }
            Change::RemoveGalleryEntry(id) => {
                tx.execute("DELETE FROM gallery_embeddings WHERE employee_id = ?1", [id.as_str()])?;
            }
            Change::PutSession(s) => {
                let status = serde_json::to_value(s.session.status).expect("status serializes");
                tx.execute(
                    "INSERT INTO sessions (session_id, employee_id, status, record) VALUES (?1, ?2, ?3, ?4)
                     ON CONFLICT(session_id) DO UPDATE SET status = excluded.status, record = excluded.record",
                    params![s.session.session_id.0, s.session.employee_id.as_str(), status.as_str(), json(s)],
                )?;
            }
            Change::AppendArchive(r) => {
                let outcome = serde_json::to_value(r.check.outcome).expect("outcome serializes");
                tx.execute(
                    "INSERT INTO checks (check_id, session_id, at, outcome, record) VALUES (?1, ?2, ?3, ?4, ?5)",
                    params![r.check.check_id as i64, r.check.session_id.0, r.check.at.0, outcome.as_str(), json(&r.check)],
                )?;
                tx.execute(
                    "INSERT INTO archive (seq, employee_id, at, record) VALUES (?1, ?2, ?3, ?4)",
                    params![r.seq as i64, r.employee.employee_id.as_str(), r.check.at.0, json(r)],
                )?;
            }
            Change::PutAlert(a) => {
                tx.execute(
                    "INSERT INTO alerts (alert_id, session_id, employee_id, record) VALUES (?1, ?2, ?3, ?4)",
                    params![a.alert_id.0, a.session_id.0, a.employee_id.as_str(), json(a)],
                )?;
            }
            Change::StoreImage { image_ref, png } => {
                tx.execute(
                    "INSERT OR REPLACE INTO images (image_ref, png) VALUES (?1, ?2)",
                    params![image_ref, png.as_slice()],
                )?;
            }
        }
        Ok(())
    }

    pub fn image(&self, image_ref: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let conn = self.conn.lock();
        Ok(conn
            .query_row("SELECT png FROM images WHERE image_ref = ?1", [image_ref], |r| r.get(0))
            .optional()?)
    }

    pub fn insert_token(&self, token: &str, principal: &Principal, now: Timestamp) -> Result<(), StoreError> {
        let conn = self.conn.lock();
        conn.execute(
            "INSERT OR REPLACE INTO tokens (token_hash, principal_id, role, created_at) VALUES (?1, ?2, ?3, ?4)",
            params![token_digest(token), principal.id, principal.role.to_string(), now.0],
        )?;
        Ok(())
    }

    /// All tokens as `(digest, principal)`.
    pub fn tokens(&self) -> Result<Vec<(String, Principal)>, StoreError> {
        let conn = self.conn.lock();
        let mut q = conn.prepare("SELECT token_hash, principal_id, role FROM tokens")?;
        let rows = q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)))?;
        let mut out = Vec::new();
        for row in rows {
            let (hash, id, role) = row?;
            let role: Role = role.parse().map_err(|_| StoreError::Corrupt { table: "tokens", message: role.clone() })?;
            out.push((hash, Principal::new(id, role)));
        }
        Ok(out)
    }

    pub fn has_admin_token(&self) -> Result<bool, StoreError> {
        Ok(self.tokens()?.iter().any(|(_, p)| p.role == Role::Admin))
    }

    /// Row count of a table, for diagnostics and tests.
    pub fn count(&self, table: &str) -> Result<i64, StoreError> {
        const TABLES: [&str; 9] =
            ["employees", "gallery_embeddings", "sessions", "checks", "archive", "alerts", "tokens", "images", "sqlite_master"];
        assert!(TABLES.contains(&table), "unknown table {table}");
        let conn = self.conn.lock();
        Ok(conn.query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get(0))?)
    }

    /// Run raw SQL; used by tests to probe constraints.
    pub fn execute_raw(&self, sql: &str) -> Result<usize, StoreError> {
        Ok(self.conn.lock().execute(sql, [])?)
    }
}

impl Journal for Store {
    fn commit(&self, changes: &[Change]) -> Result<(), JournalError> {
        let mut conn = self.conn.lock();
        let run = |conn: &mut Connection| -> rusqlite::Result<()> {
            let tx = conn.transaction()?;
            for c in changes {
                Self::apply(&tx, c)?;
            }
            tx.commit()
        };
        run(&mut conn).map_err(|e| JournalError(e.to_string()))
    }
}
