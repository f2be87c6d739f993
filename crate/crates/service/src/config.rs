use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8000";
pub const DEFAULT_QUEUE_TIMEOUT_S: f64 = 30.0;
pub const DEFAULT_LOG_MAX_BYTES: u64 = 16 * 1024 * 1024;
/// Per-measurement latency of the physical device.
pub const REALISTIC_LATENCY_S: f64 = 1.5;

/// The `[server]` table of the shared configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// `helios-cal/1` file; the built-in model when absent.
    pub calibration: Option<PathBuf>,
    /// Overrides the calibration's seed.
    pub seed: Option<u64>,
    pub latency_s: f64,
    pub queue_timeout_s: f64,
    /// NDJSON experiment log. Records are kept in memory when absent.
    pub log_path: Option<PathBuf>,
    pub log_max_bytes: u64,
    /// Directory served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Bearer token required on every endpoint when set.
    pub token: Option<String>,
    /// Salt for hashing client addresses. Generated and stored beside the
    /// log when absent.
    pub client_salt: Option<String>,
    /// Take the client address from `X-Forwarded-For`.
    pub trust_forwarded_for: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: DEFAULT_LISTEN.to_string(),
            calibration: None,
            seed: None,
            latency_s: 0.0,
            queue_timeout_s: DEFAULT_QUEUE_TIMEOUT_S,
            log_path: None,
            log_max_bytes: DEFAULT_LOG_MAX_BYTES,
            static_dir: None,
            token: None,
            client_salt: None,
            trust_forwarded_for: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid server configuration: {0}")]
pub struct ConfigError(pub String);

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.latency_s.is_finite() && self.latency_s >= 0.0) {
            return Err(ConfigError(format!("latency_s must be >= 0, got {}", self.latency_s)));
        }
        if !(self.queue_timeout_s.is_finite() && self.queue_timeout_s >= 0.0) {
            return Err(ConfigError(format!(
                "queue_timeout_s must be >= 0, got {}",
                self.queue_timeout_s
            )));
        }
        if self.log_max_bytes == 0 {
            return Err(ConfigError("log_max_bytes must be positive".into()));
        }
        if self.token.as_deref().is_some_and(str::is_empty) {
            return Err(ConfigError("token must not be empty".into()));
        }
        Ok(())
    }

    pub fn latency(&self) -> Duration {
        Duration::from_secs_f64(self.latency_s)
    }

    pub fn queue_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.queue_timeout_s)
    }
}
