use std::path::{Path, PathBuf};

use revhist_core::time::Granularity;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Environment variable that overrides `index_dir`.
pub const INDEX_ENV: &str = "REVHIST_INDEX";

/// Service settings, read from a TOML file:
///
/// ```toml
/// index_dir = "run/04-index"
/// bind_address = "127.0.0.1:8080"
/// max_range_days = 3650
/// default_granularity = "week"
/// cors_allowed_origins = ["http://localhost:5173"]
/// ui_dir = "explorer-ui/dist"   # optional, served under /ui
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub index_dir: PathBuf,
    pub bind_address: String,
    pub max_range_days: i64,
    pub default_granularity: Granularity,
    /// Exact origins, or `"*"` for any.
    pub cors_allowed_origins: Vec<String>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            index_dir: PathBuf::from("index"),
            bind_address: "127.0.0.1:8080".into(),
            max_range_days: 3650,
            default_granularity: Granularity::Week,
            cors_allowed_origins: Vec::new(),
            ui_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.index_dir.is_relative() {
            cfg.index_dir = base.join(&cfg.index_dir);
        }
        if let Some(ui) = cfg.ui_dir.as_mut().filter(|u| u.is_relative()) {
            *ui = base.join(&*ui);
        }
        Ok(cfg)
    }

    /// Applies `REVHIST_INDEX`, if set and non-empty.
    pub fn with_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(INDEX_ENV).filter(|v| !v.is_empty()) {
            self.index_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_range_days < 1 {
            return Err(ServiceError::Config("max_range_days must be at least 1".into()));
        }
        if self.bind_address.trim().is_empty() {
            return Err(ServiceError::Config("bind_address is empty".into()));
        }
        Ok(())
    }
}
