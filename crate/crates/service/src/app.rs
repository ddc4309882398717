//! Shared service state: the attendance aggregate over the SQLite store,
//! the token table and the alert dispatcher.

use crate::backend::{build_pipeline, BackendError};
use crate::config::ServiceConfig;
use crate::store::{token_digest, Store, StoreError};
use parking_lot::RwLock;
use presenzia_core::attendance::{Attendance, AttendanceError, RecordedCheck};
use presenzia_core::directory::{Principal, Role};
use presenzia_core::time::{Clock, SystemClock, Timestamp};
use presenzia_core::tracking::{AlertDispatcher, AlertEvent, DeliveryReceipt, LogNotifier};
use rand::RngCore;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Attendance(#[from] AttendanceError),
    #[error("alert log: {0}")]
    AlertLog(std::io::Error),
}

pub struct App {
    pub config: ServiceConfig,
    pub attendance: Attendance,
    pub store: Store,
    pub clock: Arc<dyn Clock>,
    tokens: RwLock<HashMap<String, Principal>>,
    dispatcher: AlertDispatcher,
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App").field("listen", &self.config.listen).finish_non_exhaustive()
    }
}

/// 32 random bytes from the OS-seeded generator, hex encoded.
pub fn generate_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl App {
    /// Open the store, reload state and wire the pipeline named by the config.
    pub fn open(config: ServiceConfig) -> Result<Self, StartupError> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, StartupError> {
        let store = Store::open(&config.store_path())?;
        let pipeline = build_pipeline(&config.backend, config.detection)?;
        let state = store.load_state()?;
        let attendance =
            Attendance::new(state, Box::new(store.clone()), pipeline, config.recognition, config.tracking)?;
        let notifier = LogNotifier::new(config.alert_log_path());
        let delivered = notifier.delivered_keys().map_err(StartupError::AlertLog)?;
        let dispatcher = AlertDispatcher::new(Box::new(notifier)).with_delivered(delivered);
        if let Some(t) = &config.admin_token {
            store.insert_token(t, &Principal::admin(), clock.now())?;
        }
        let tokens = store.tokens()?.into_iter().collect();
        let app = App { config, attendance, store, clock, tokens: RwLock::new(tokens), dispatcher };
        app.redeliver_pending();
        Ok(app)
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn authenticate(&self, token: &str) -> Option<Principal> {
        self.tokens.read().get(&token_digest(token)).cloned()
    }

    /// Create and persist a new token for `principal`.
    pub fn issue_token(&self, principal: &Principal) -> Result<String, StoreError> {
        let token = generate_token();
        self.store.insert_token(&token, principal, self.now())?;
        self.tokens.write().insert(token_digest(&token), principal.clone());
        Ok(token)
    }

    /// Mint an admin token when none exists yet, so a fresh store is usable.
    pub fn bootstrap_admin(&self) -> Result<Option<String>, StoreError> {
        if self.tokens.read().values().any(|p| p.role == Role::Admin) {
            return Ok(None);
        }
        self.issue_token(&Principal::admin()).map(Some)
    }

    /// Deliver an alert to both recipients; failures are retried and then dead-lettered.
    pub fn dispatch(&self, alert: &AlertEvent) -> DeliveryReceipt {
        let receipt = self.dispatcher.dispatch(alert);
        if receipt.dead_lettered() {
            tracing::error!(alert = %alert.alert_id, "alert delivery dead-lettered");
        }
        receipt
    }

    fn redeliver_pending(&self) {
        let alerts: Vec<AlertEvent> = self.attendance.with_state(|s| s.alerts.values().cloned().collect());
        for a in &alerts {
            self.dispatch(a);
        }
    }

    pub fn dead_letters(&self) -> usize {
        self.dispatcher.dead_letters().len()
    }

    /// Record missed scheduled checks and deliver any alerts they raise.
    pub fn sweep(&self) -> Result<Vec<RecordedCheck>, AttendanceError> {
        let recorded = self.attendance.sweep_missed_checks(self.now())?;
        for r in &recorded {
            if let Some(a) = &r.alert {
                self.dispatch(a);
            }
        }
        Ok(recorded)
    }
}
