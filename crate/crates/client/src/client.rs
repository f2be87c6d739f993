use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use helios_core::{Counts, RgbSetting};
use reqwest::blocking::Response;
use reqwest::StatusCode;
use serde::Deserialize;

use crate::instrument::InstrumentKind;

pub const BASE_URL_ENV: &str = "HELIOS_BASE_URL";

const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8000";

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Extra attempts after the first one.
    pub retries: u32,
    pub backoff_base: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }
}

impl ClientConfig {
    pub fn with_base_url(base_url: impl Into<String>) -> Self {
        ClientConfig {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    /// Defaults with the base URL taken from `HELIOS_BASE_URL` when set.
    pub fn from_env() -> Self {
        let mut config = ClientConfig::default();
        if let Some(url) = std::env::var(BASE_URL_ENV).ok().filter(|u| !u.trim().is_empty()) {
            config.base_url = url;
        }
        config
    }

    fn validate(&self) -> Result<(), ClientError> {
        if self.timeout.is_zero() {
            return Err(ClientError::Config("timeout must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ClientError::Config(format!(
                "base URL `{}` must start with http:// or https://",
                self.base_url
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server answered {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    Decode(String),
}

/// Body of `GET /api`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ApiResponse {
    #[serde(rename = "in")]
    pub input: RgbSetting,
    #[serde(rename = "out")]
    pub output: Counts,
}

/// Delay before retry number `attempt` (0 for the first retry):
/// `base * 2^attempt`.
pub fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    base.saturating_mul(1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX))
}

/// How the client waits between attempts. Tests substitute a recorder.
pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

fn retryable(status: StatusCode) -> bool {
    matches!(status.as_u16(), 429 | 502 | 503 | 504)
}

#[derive(Clone)]
pub struct Client {
    config: ClientConfig,
    http: reqwest::blocking::Client,
    sleeper: Sleeper,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Client {
            config,
            http,
            sleeper: Arc::new(std::thread::sleep),
        })
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    /// GET with retries on transport failures and on 429/502/503/504.
    fn get(&self, path: &str, query: &[(&str, String)]) -> Result<Response, ClientError> {
        let url = self.url(path);
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                (self.sleeper)(backoff_delay(self.config.backoff_base, attempt - 1));
            }
            match self.http.get(&url).query(query).send() {
                Ok(resp) if resp.status().is_success() => return Ok(resp),
                Ok(resp) if retryable(resp.status()) => {
                    let status = resp.status();
                    last = format!("{status}: {}", resp.text().unwrap_or_default());
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.text().unwrap_or_default();
                    return Err(ClientError::Protocol { status, body });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(ClientError::Transport {
            attempts,
            message: last,
        })
    }

    /// Raw `/api` call with all three inputs.
    pub fn api(&self, setting: RgbSetting) -> Result<ApiResponse, ClientError> {
        let [r, g, b] = setting.as_array();
        let query = [("R", r.to_string()), ("G", g.to_string()), ("B", b.to_string())];
        let resp = self.get("api", &query)?;
        let text = resp.text().map_err(|e| ClientError::Decode(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e} in {text}")))
    }

    /// Counts on the instrument's channels, in its declared order.
    pub fn measure(&self, kind: InstrumentKind, inputs: RgbSetting) -> Result<Vec<u16>, ClientError> {
        let resp = self.api(kind.restrict(inputs))?;
        Ok(kind.channels().iter().map(|c| resp.output.get(*c)).collect())
    }

    /// `GET /stats` as loose JSON.
    pub fn stats(&self) -> Result<serde_json::Value, ClientError> {
        let resp = self.get("stats", &[])?;
        resp.json().map_err(|e| ClientError::Decode(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let base = Duration::from_millis(100);
        let d: Vec<u128> = (0..5).map(|a| backoff_delay(base, a).as_millis()).collect();
        assert_eq!(d, [100, 200, 400, 800, 1600]);
        assert!(backoff_delay(base, 200) >= backoff_delay(base, 31));
    }

    #[test]
    fn config_validation() {
        assert!(Client::new(ClientConfig::with_base_url("localhost:8000")).is_err());
        let zero = ClientConfig {
            timeout: Duration::ZERO,
            ..Default::default()
        };
        assert!(matches!(Client::new(zero), Err(ClientError::Config(_))));
        assert!(Client::new(ClientConfig::default()).is_ok());
    }

    #[test]
    fn parses_api_body() {
        let body = r#"{"in":{"R":0.0,"G":0.5,"B":0.0},"out":{"415nm":1,"445nm":2,"480nm":3,"515nm":34343,"555nm":5,"590nm":6,"630nm":7,"680nm":8,"clear":9,"nir":10}}"#;
        let r: ApiResponse = serde_json::from_str(body).unwrap();
        assert_eq!(r.input.g(), 0.5);
        assert_eq!(r.output.get(helios_core::Channel::W515), 34343);
    }
}
