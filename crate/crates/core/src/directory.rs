//! Employee records and the roles that gate who may change them.

use crate::gallery::PersonId;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub type EmployeeId = PersonId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Employee,
    Auditor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Admin => "admin",
            Role::Employee => "employee",
            Role::Auditor => "auditor",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = DirectoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "admin" => Ok(Role::Admin),
            "employee" => Ok(Role::Employee),
            "auditor" => Ok(Role::Auditor),
            other => Err(DirectoryError::Validation(format!("unknown role {other:?}"))),
        }
    }
}

/// Role carried by an employee record. Auditors are token-only principals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmployeeRole {
    Admin,
    Employee,
}

impl std::str::FromStr for EmployeeRole {
    type Err = DirectoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Role>()? {
            Role::Admin => Ok(EmployeeRole::Admin),
            Role::Employee => Ok(EmployeeRole::Employee),
            Role::Auditor => Err(DirectoryError::Validation("auditor is not an employee role".into())),
        }
    }
}

/// Whoever is calling an operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    pub role: Role,
}

impl Principal {
    pub fn new(id: impl Into<String>, role: Role) -> Self {
        Principal { id: id.into(), role }
    }

    pub fn admin() -> Self {
        Principal::new("admin", Role::Admin)
    }

    pub fn employee(id: &EmployeeId) -> Self {
        Principal::new(id.as_str(), Role::Employee)
    }

    pub fn auditor() -> Self {
        Principal::new("auditor", Role::Auditor)
    }

    pub fn require_admin(&self) -> Result<(), DirectoryError> {
        if self.role == Role::Admin {
            Ok(())
        } else {
            Err(DirectoryError::PermissionDenied(format!("{} role cannot modify the directory", self.role)))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectoryError {
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("employee {0} already exists")]
    AlreadyExists(EmployeeId),
    #[error("employee {0} not found")]
    NotFound(EmployeeId),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("enrollment failed: {0}")]
    EnrollmentFailed(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmployeeRecord {
    pub employee_id: EmployeeId,
    pub name: String,
    pub contact: String,
    pub role: EmployeeRole,
    #[serde(default = "default_active")]
    pub active: bool,
    #[serde(default)]
    pub enrollment_image_refs: Vec<String>,
}

fn default_active() -> bool {
    true
}

impl EmployeeRecord {
    pub fn new(id: impl Into<String>, name: impl Into<String>, contact: impl Into<String>, role: EmployeeRole) -> Self {
        EmployeeRecord {
            employee_id: PersonId::new(id),
            name: name.into(),
            contact: contact.into(),
            role,
            active: true,
            enrollment_image_refs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DirectoryError> {
        validate_id(self.employee_id.as_str())?;
        if self.name.trim().is_empty() {
            return Err(DirectoryError::Validation("name must not be empty".into()));
        }
        if !is_valid_email(&self.contact) {
            return Err(DirectoryError::Validation(format!("invalid email {:?}", self.contact)));
        }
        Ok(())
    }
}

fn validate_id(id: &str) -> Result<(), DirectoryError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(DirectoryError::Validation(format!(
            "employee id {id:?} must be 1-64 characters of [A-Za-z0-9._-]"
        )))
    }
}

/// Syntactic check: one `@`, non-empty local part, dotted domain of
/// alphanumeric/hyphen labels.
pub fn is_valid_email(s: &str) -> bool {
    let Some((local, domain)) = s.split_once('@') else { return false };
    if local.is_empty() || local.len() > 64 || domain.contains('@') || s.len() > 254 {
        return false;
    }
    let local_ok = local
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || "!#$%&'*+/=?^_`{|}~.-".contains(c))
        && !local.starts_with('.')
        && !local.ends_with('.')
        && !local.contains("..");
    let labels: Vec<&str> = domain.split('.').collect();
    let domain_ok = labels.len() >= 2
        && labels.iter().all(|l| {
            !l.is_empty()
                && !l.starts_with('-')
                && !l.ends_with('-')
                && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
        });
    local_ok && domain_ok
}

/// Partial update of an employee record. Absent fields stay unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmployeePatch {
    pub name: Option<String>,
    pub contact: Option<String>,
    pub role: Option<EmployeeRole>,
    pub active: Option<bool>,
}

impl EmployeePatch {
    pub fn is_empty(&self) -> bool {
        self.name.is_none() && self.contact.is_none() && self.role.is_none() && self.active.is_none()
    }

    /// Apply to a copy of `record`; the result is validated before returning.
    pub fn apply_to(&self, record: &EmployeeRecord) -> Result<EmployeeRecord, DirectoryError> {
        let mut out = record.clone();
        if let Some(n) = &self.name {
            out.name = n.clone();
        }
        if let Some(c) = &self.contact {
            out.contact = c.clone();
        }
        if let Some(r) = self.role {
            out.role = r;
        }
        if let Some(a) = self.active {
            out.active = a;
        }
        out.validate()?;
        Ok(out)
    }
}

/// Parse a bootstrap CSV of `id,name,email,role` rows. A header row with
/// those column names is optional.
pub fn parse_employee_csv(text: &str) -> Result<Vec<EmployeeRecord>, DirectoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| DirectoryError::Csv { line, message: e.to_string() })?;
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && row.get(0).is_some_and(|f| f.eq_ignore_ascii_case("id")) {
            continue;
        }
        if row.len() != 4 {
            return Err(DirectoryError::Csv { line, message: format!("expected 4 fields, got {}", row.len()) });
        }
        let role: EmployeeRole = row[3].parse().map_err(|e: DirectoryError| DirectoryError::Csv {
            line,
            message: e.to_string(),
        })?;
        let record = EmployeeRecord::new(&row[0], &row[1], &row[2], role);
        record.validate().map_err(|e| DirectoryError::Csv { line, message: e.to_string() })?;
        if !seen.insert(record.employee_id.clone()) {
            return Err(DirectoryError::Csv { line, message: format!("duplicate id {}", record.employee_id) });
        }
        out.push(record);
    }
    Ok(out)
}
