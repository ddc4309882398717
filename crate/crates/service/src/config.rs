//! Service configuration: one TOML or JSON file plus environment overrides.

use presenzia_core::detection::CascadeConfig;
use presenzia_core::{MiningConfig, RecognitionConfig, TrackingConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ENV_CONFIG: &str = "PRESENZIA_CONFIG";
pub const ENV_ADDR: &str = "PRESENZIA_ADDR";
pub const ENV_STORE: &str = "PRESENZIA_STORE";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Reference,
    Real,
}

impl std::str::FromStr for BackendKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(BackendKind::Reference),
            "real" => Ok(BackendKind::Real),
            other => Err(ConfigError::Invalid(format!("unknown backend {other:?} (expected reference or real)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub detector: BackendKind,
    pub embedder: BackendKind,
    /// ONNX embedding model used when `embedder = "real"`.
    pub embedder_model: Option<PathBuf>,
    /// Input side of the ONNX embedder.
    pub embedder_input_side: Option<u32>,
    /// Proposal, refine and output ONNX models used when `detector = "real"`.
    pub detector_models: Option<[PathBuf; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// SQLite path, optionally prefixed with `sqlite:`.
    pub store: String,
    /// Append-only alert delivery log. Defaults to `<store>.alerts.jsonl`.
    pub alert_log: Option<PathBuf>,
    /// Token accepted as admin on startup (inserted into the tokens table).
    pub admin_token: Option<String>,
    /// Directory of static UI assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    /// Seconds between sweeps for missed scheduled checks.
    pub sweep_interval_secs: u64,
    /// Session length used when a start request does not give one.
    pub default_session_secs: u64,
    pub recognition: RecognitionConfig,
    pub tracking: TrackingConfig,
    pub mining: MiningConfig,
    pub detection: CascadeConfig,
    pub backend: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            store: "presenzia.db".into(),
            alert_log: None,
            admin_token: None,
            ui_dir: None,
            sweep_interval_secs: 30,
            default_session_secs: 8 * 3600,
            recognition: RecognitionConfig::default(),
            tracking: TrackingConfig::default(),
            mining: MiningConfig::default(),
            detection: CascadeConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

/// Parse and validate config text.
pub fn parse_config(text: &str, format: ConfigFormat) -> Result<ServiceConfig, ConfigError> {
    let cfg: ServiceConfig = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?,
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ServiceConfig {
    /// Load from `path` (or `$PRESENZIA_CONFIG`, or defaults), then apply
    /// `PRESENZIA_ADDR` and `PRESENZIA_STORE`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let path = path.map(Path::to_path_buf).or_else(|| env(ENV_CONFIG).filter(|s| !s.is_empty()).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| ConfigError::Io { path: p.clone(), message: e.to_string() })?;
                parse_config(&text, ConfigFormat::from_path(&p))?
            }
            None => ServiceConfig::default(),
        };
        if let Some(addr) = env(ENV_ADDR).filter(|s| !s.is_empty()) {
            cfg.listen = addr;
        }
        if let Some(store) = env(ENV_STORE).filter(|s| !s.is_empty()) {
            cfg.store = store;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::load(None, |k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.listen
            .parse::<std::net::SocketAddr>()
            .map_err(|e| ConfigError::Invalid(format!("listen address {:?}: {e}", self.listen)))?;
        store_path(&self.store)?;
        self.recognition.validate().map_err(|e| invalid(&e))?;
        self.tracking.validate().map_err(|e| invalid(&e))?;
        self.mining.validate().map_err(|e| invalid(&e))?;
        self.detection.validate().map_err(|e| invalid(&e))?;
        if self.sweep_interval_secs == 0 {
            return Err(ConfigError::Invalid("sweep_interval_secs must be positive".into()));
        }
        if self.default_session_secs == 0 {
            return Err(ConfigError::Invalid("default_session_secs must be positive".into()));
        }
        if let Some(t) = &self.admin_token {
            if t.len() < 16 {
                return Err(ConfigError::Invalid("admin_token must be at least 16 characters".into()));
            }
        }
        if self.backend.embedder == BackendKind::Real && self.backend.embedder_model.is_none() {
            return Err(ConfigError::Invalid("backend.embedder = \"real\" needs backend.embedder_model".into()));
        }
        if self.backend.detector == BackendKind::Real && self.backend.detector_models.is_none() {
            return Err(ConfigError::Invalid("backend.detector = \"real\" needs backend.detector_models".into()));
        }
        Ok(())
    }

    pub fn store_path(&self) -> PathBuf {
        store_path(&self.store).expect("validated")
    }

    pub fn alert_log_path(&self) -> PathBuf {
        self.alert_log.clone().unwrap_or_else(|| {
            let mut p = self.store_path().into_os_string();
            p.push(".alerts.jsonl");
            PathBuf::from(p)
        })
    }
}

/// Resolve a store DSN to a SQLite file path. Only SQLite is supported.
pub fn store_path(dsn: &str) -> Result<PathBuf, ConfigError> {
    let rest = dsn.strip_prefix("sqlite://").or_else(|| dsn.strip_prefix("sqlite:")).unwrap_or(dsn);
    if rest.is_empty() {
        return Err(ConfigError::Invalid("store path is empty".into()));
    }
    if let Some((scheme, _)) = rest.split_once("://") {
        return Err(ConfigError::Invalid(format!("unsupported store scheme {scheme:?}; only SQLite paths are supported")));
    }
    Ok(PathBuf::from(rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn defaults_need_no_files() {
        let cfg = ServiceConfig::load(None, env(&[])).unwrap();
        assert_eq!(cfg, ServiceConfig::default());
        assert_eq!(cfg.alert_log_path(), PathBuf::from("presenzia.db.alerts.jsonl"));
    }

    #[test]
    fn file_then_env_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("svc.toml");
        std::fs::write(&p, "listen = \"0.0.0.0:9000\"\nstore = \"a.db\"\n[tracking]\nn_miss = 5\n[recognition]\nk = 1\n").unwrap();
        let cfg = ServiceConfig::load(Some(&p), env(&[(ENV_STORE, "sqlite:b.db")])).unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.store_path(), PathBuf::from("b.db"));
        assert_eq!(cfg.tracking.n_miss, 5);
        assert_eq!(cfg.tracking.segment_count, TrackingConfig::default().segment_count);
        assert_eq!(cfg.recognition.k, 1);

        let j = dir.path().join("svc.json");
        std::fs::write(&j, r#"{"listen":"127.0.0.1:1"}"#).unwrap();
        let cfg = ServiceConfig::load(None, env(&[(ENV_CONFIG, j.to_str().unwrap()), (ENV_ADDR, "127.0.0.1:2")])).unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:2");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(parse_config("nonsense = 1", ConfigFormat::Toml), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("listen = \"nowhere\"", ConfigFormat::Toml), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("[tracking]\nn_miss = 0", ConfigFormat::Toml), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("[recognition]\nk = 0", ConfigFormat::Toml), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("store = \"postgres://db\"", ConfigFormat::Toml), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("[backend]\nembedder = \"real\"", ConfigFormat::Toml), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            ServiceConfig::load(Some(Path::new("/nonexistent/x.toml")), env(&[])),
            Err(ConfigError::Io { .. })
        ));
    }
}
