use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Connection, cost and pacing settings for one provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key, read at request time.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub timeout_s: f64,
    /// At most this many requests per `rate_interval_s`; 0 disables.
    pub rate_limit: u32,
    pub rate_interval_s: f64,
    /// Attempts per session, retries included.
    pub max_requests: u32,
    pub max_tokens: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o-mini".to_string(),
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            temperature: 0.0,
            timeout_s: 60.0,
            rate_limit: 0,
            rate_interval_s: 60.0,
            max_requests: 20,
            max_tokens: 50_000,
            max_retries: 4,
            backoff_base_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err("timeout_s must be positive".into());
        }
        if self.rate_limit > 0 && !(self.rate_interval_s.is_finite() && self.rate_interval_s > 0.0) {
            return Err("rate_interval_s must be positive when rate_limit is set".into());
        }
        if self.model.trim().is_empty() {
            return Err("model must not be empty".into());
        }
        Ok(())
    }

    pub fn backoff_base(&self) -> Duration {
        Duration::from_millis(self.backoff_base_ms)
    }
}

/// A raw HTTP exchange result.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Worth trying again (timeouts, resets), as opposed to
    /// misconfiguration.
    pub retryable: bool,
}

/// Sends one chat-completions request body.
pub trait Transport: Send {
    fn send(&mut self, request: &Value) -> Result<RawResponse, TransportError>;
}

pub struct HttpTransport {
    endpoint: String,
    api_key_env: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: &ProviderConfig) -> Result<Self, TransportError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| TransportError {
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(HttpTransport {
            endpoint: config.endpoint.clone(),
            api_key_env: config.api_key_env.clone(),
            http,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, request: &Value) -> Result<RawResponse, TransportError> {
        let mut req = self.http.post(&self.endpoint).json(request);
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var).map_err(|_| TransportError {
                message: format!("credential variable {var} is not set"),
                retryable: false,
            })?;
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp.text().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        Ok(RawResponse {
            status,
            body,
            retry_after,
        })
    }
}

/// Time source for pacing and audit stamps.
pub trait Clock: Send {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&mut self, d: Duration);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Deterministic clock: sleeping advances time instantly and is recorded.
#[derive(Clone)]
pub struct ManualClock {
    inner: Arc<Mutex<(DateTime<Utc>, Vec<Duration>)>>,
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock::starting_at(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
    }
}

impl ManualClock {
    pub fn starting_at(t: DateTime<Utc>) -> Self {
        ManualClock {
            inner: Arc::new(Mutex::new((t, Vec::new()))),
        }
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.inner.lock().unwrap().1.clone()
    }

    pub fn advance(&self, d: Duration) {
        let mut g = self.inner.lock().unwrap();
        g.0 += chrono::Duration::from_std(d).unwrap_or(chrono::Duration::MAX);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        self.inner.lock().unwrap().0
    }

    fn sleep(&mut self, d: Duration) {
        self.advance(d);
        self.inner.lock().unwrap().1.push(d);
    }
}
