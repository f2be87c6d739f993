use std::collections::VecDeque;
use std::io::Write;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::message::{ChatMessage, Role, ToolSpec};
use crate::provider::{Clock, HttpTransport, ProviderConfig, SystemClock, Transport};
use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetResource {
    Requests,
    Tokens,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Usage {
    /// HTTP attempts, retries included.
    pub requests: u32,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Request {
        seq: u64,
        at: DateTime<Utc>,
        body: Value,
    },
    Response {
        seq: u64,
        at: DateTime<Utc>,
        status: Option<u16>,
        body: String,
    },
    Provenance {
        at: DateTime<Utc>,
        kind: String,
        model: String,
        prompt: String,
    },
}

/// Structured-output hint sent as `response_format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseFormat {
    JsonObject,
}

/// `base * 2^attempt`, attempt 0 being the first retry.
pub fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    base.saturating_mul(1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX))
}

fn estimate_tokens(text_len: usize) -> u64 {
    (text_len as u64).div_ceil(4)
}

/// One conversation context with its own budget, pacing and audit trail.
pub struct Session {
    config: ProviderConfig,
    transport: Box<dyn Transport>,
    clock: Box<dyn Clock>,
    usage: Usage,
    window: VecDeque<DateTime<Utc>>,
    audit: Vec<AuditEvent>,
    seq: u64,
}

impl Session {
    pub fn new(
        config: ProviderConfig,
        transport: Box<dyn Transport>,
        clock: Box<dyn Clock>,
    ) -> Result<Self, LlmError> {
        config.validate().map_err(LlmError::Config)?;
        Ok(Session {
            config,
            transport,
            clock,
            usage: Usage::default(),
            window: VecDeque::new(),
            audit: Vec::new(),
            seq: 0,
        })
    }

    /// A live provider over HTTP.
    pub fn http(config: ProviderConfig) -> Result<Self, LlmError> {
        let transport = HttpTransport::new(&config).map_err(|e| LlmError::Config(e.message))?;
        Self::new(config, Box::new(transport), Box::new(SystemClock))
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn usage(&self) -> Usage {
        self.usage
    }

    pub fn audit(&self) -> &[AuditEvent] {
        &self.audit
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub(crate) fn record_provenance(&mut self, kind: &str, prompt: &str) -> AuditEvent {
        let event = AuditEvent::Provenance {
            at: self.clock.now(),
            kind: kind.to_string(),
            model: self.config.model.clone(),
            prompt: prompt.to_string(),
        };
        self.audit.push(event.clone());
        event
    }

    /// Audit trail as newline-delimited JSON.
    pub fn write_audit<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.audit {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn check_budget(&self) -> Result<(), LlmError> {
        if self.usage.requests >= self.config.max_requests {
            return Err(LlmError::Budget {
                resource: BudgetResource::Requests,
                limit: u64::from(self.config.max_requests),
            });
        }
        if self.usage.tokens >= self.config.max_tokens {
            return Err(LlmError::Budget {
                resource: BudgetResource::Tokens,
                limit: self.config.max_tokens,
            });
        }
        Ok(())
    }

    /// Sleeps until the sliding window has room for one more request.
    fn pace(&mut self) {
        if self.config.rate_limit == 0 {
            return;
        }
        let interval = chrono::Duration::from_std(Duration::from_secs_f64(self.config.rate_interval_s))
            .unwrap_or(chrono::Duration::MAX);
        let now = self.clock.now();
        while self.window.front().is_some_and(|t| *t + interval <= now) {
            self.window.pop_front();
        }
        if self.window.len() >= self.config.rate_limit as usize {
            let oldest = self.window[0];
            let wait = (oldest + interval - now).to_std().unwrap_or_default();
            self.clock.sleep(wait);
            let now = self.clock.now();
            while self.window.front().is_some_and(|t| *t + interval <= now) {
                self.window.pop_front();
            }
        }
    }

    fn request_body(&self, messages: &[ChatMessage], tools: &[ToolSpec], format: Option<ResponseFormat>) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(tools.iter().map(ToolSpec::to_wire).collect());
            body["tool_choice"] = json!("auto");
        }
        if let Some(ResponseFormat::JsonObject) = format {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }

    /// One assistant turn. Rate-limit and server errors are retried with
    /// exponential backoff; each attempt counts against the budget.
    pub fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        format: Option<ResponseFormat>,
    ) -> Result<ChatMessage, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::Argument("at least one message is required".into()));
        }
        for m in messages {
            m.validate().map_err(LlmError::Argument)?;
        }
        let body = self.request_body(messages, tools, format);
        let body_len = body.to_string().len();
        let mut attempt = 0u32;
        loop {
            self.check_budget()?;
            self.pace();
            self.usage.requests += 1;
            self.seq += 1;
            let seq = self.seq;
            let at = self.clock.now();
            self.window.push_back(at);
            self.audit.push(AuditEvent::Request {
                seq,
                at,
                body: body.clone(),
            });

            let outcome = self.transport.send(&body);
            let at = self.clock.now();
            let (retry, message, wait_hint) = match outcome {
                Ok(raw) => {
                    self.audit.push(AuditEvent::Response {
                        seq,
                        at,
                        status: Some(raw.status),
                        body: raw.body.clone(),
                    });
                    if raw.status == 200 {
                        return self.accept(&raw.body, body_len);
                    }
                    let transient = raw.status == 429 || raw.status >= 500;
                    if !transient {
                        return Err(LlmError::Protocol {
                            status: Some(raw.status),
                            message: raw.body,
                        });
                    }
                    (true, format!("status {}: {}", raw.status, raw.body), raw.retry_after)
                }
                Err(e) => {
                    self.audit.push(AuditEvent::Response {
                        seq,
                        at,
                        status: None,
                        body: e.message.clone(),
                    });
                    (e.retryable, e.message, None)
                }
            };
            if !retry || attempt >= self.config.max_retries {
                return Err(LlmError::Provider {
                    attempts: attempt + 1,
                    message,
                });
            }
            let delay = backoff_delay(self.config.backoff_base(), attempt).max(wait_hint.unwrap_or_default());
            self.clock.sleep(delay);
            attempt += 1;
        }
    }

    fn accept(&mut self, body: &str, request_len: usize) -> Result<ChatMessage, LlmError> {
        let protocol = |message: String| LlmError::Protocol {
            status: Some(200),
            message,
        };
        let v: Value = serde_json::from_str(body).map_err(|e| protocol(format!("body is not JSON: {e}")))?;
        let tokens = v["usage"]["total_tokens"]
            .as_u64()
            .unwrap_or_else(|| estimate_tokens(request_len + body.len()));
        self.usage.tokens = self.usage.tokens.saturating_add(tokens);
        let message = v["choices"][0]["message"].clone();
        if message.is_null() {
            return Err(protocol("response has no choices[0].message".into()));
        }
        let message: ChatMessage =
            serde_json::from_value(message).map_err(|e| protocol(format!("bad assistant message: {e}")))?;
        if message.role != Role::Assistant {
            return Err(protocol(format!("expected an assistant message, got {:?}", message.role)));
        }
        Ok(message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ManualClock;
    use crate::script::{Script, ScriptEntry, ScriptedProvider};

    fn session(entries: Vec<ScriptEntry>, config: ProviderConfig) -> (Session, ScriptedProvider, ManualClock) {
        let provider = ScriptedProvider::new(Script::new(entries));
        let clock = ManualClock::default();
        let s = Session::new(config, Box::new(provider.clone()), Box::new(clock.clone())).unwrap();
        (s, provider, clock)
    }

    fn hello() -> Vec<ChatMessage> {
        vec![ChatMessage::user("hello")]
    }

    #[test]
    fn fixed_text_costs_one_request() {
        let (mut s, p, _) = session(vec![ScriptEntry::text("hi there")], ProviderConfig::default());
        let m = s.complete(&hello(), &[], None).unwrap();
        assert_eq!(m.content.as_deref(), Some("hi there"));
        assert_eq!(s.usage().requests, 1);
        assert_eq!(p.requests().len(), 1);
        let req = &p.requests()[0];
        assert_eq!(req["temperature"], 0.0);
        assert!(req.get("tools").is_none());
    }

    #[test]
    fn retries_rate_limits_with_backoff() {
        let config = ProviderConfig {
            backoff_base_ms: 100,
            ..Default::default()
        };
        let (mut s, p, clock) = session(
            vec![ScriptEntry::status(429), ScriptEntry::status(429), ScriptEntry::text("ok")],
            config,
        );
        assert_eq!(s.complete(&hello(), &[], None).unwrap().content.as_deref(), Some("ok"));
        assert_eq!(clock.sleeps(), vec![Duration::from_millis(100), Duration::from_millis(200)]);
        assert_eq!(p.requests().len(), 3);
        assert_eq!(s.usage().requests, 3);
    }

    #[test]
    fn honours_retry_after_when_longer() {
        let entry = ScriptEntry {
            retry_after_s: Some(3.0),
            ..ScriptEntry::status(503)
        };
        let (mut s, _, clock) = session(vec![entry, ScriptEntry::text("ok")], ProviderConfig::default());
        s.complete(&hello(), &[], None).unwrap();
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(3)]);
    }

    #[test]
    fn zero_budget_sends_nothing() {
        let config = ProviderConfig {
            max_requests: 0,
            ..Default::default()
        };
        let (mut s, p, _) = session(vec![ScriptEntry::text("x")], config);
        let err = s.complete(&hello(), &[], None).unwrap_err();
        assert!(matches!(err, LlmError::Budget { resource: BudgetResource::Requests, .. }));
        assert!(p.requests().is_empty());
    }

    #[test]
    fn token_budget_blocks_the_next_request() {
        let config = ProviderConfig {
            max_tokens: 100,
            ..Default::default()
        };
        let entry = ScriptEntry {
            total_tokens: Some(150),
            ..ScriptEntry::text("long")
        };
        let (mut s, p, _) = session(vec![entry, ScriptEntry::text("never")], config);
        s.complete(&hello(), &[], None).unwrap();
        assert_eq!(s.usage().tokens, 150);
        let err = s.complete(&hello(), &[], None).unwrap_err();
        assert!(matches!(err, LlmError::Budget { resource: BudgetResource::Tokens, .. }));
        assert_eq!(p.requests().len(), 1);
    }

    #[test]
    fn retries_stop_at_the_cap() {
        let config = ProviderConfig {
            max_retries: 2,
            ..Default::default()
        };
        let (mut s, p, _) = session(vec![ScriptEntry::status(500); 5], config);
        let err = s.complete(&hello(), &[], None).unwrap_err();
        assert!(matches!(err, LlmError::Provider { attempts: 3, .. }), "{err}");
        assert_eq!(p.requests().len(), 3);
    }

    #[test]
    fn client_errors_and_bad_bodies() {
        let garbage = ScriptEntry {
            body: Some(Value::String("<html>".into())),
            ..Default::default()
        };
        let (mut s, _, _) = session(vec![ScriptEntry::status(401), garbage], ProviderConfig::default());
        assert!(matches!(
            s.complete(&hello(), &[], None),
            Err(LlmError::Protocol { status: Some(401), .. })
        ));
        assert!(matches!(
            s.complete(&hello(), &[], None),
            Err(LlmError::Protocol { status: Some(200), .. })
        ));
        assert!(matches!(s.complete(&[], &[], None), Err(LlmError::Argument(_))));
    }

    #[test]
    fn sliding_window_paces_requests() {
        let config = ProviderConfig {
            rate_limit: 2,
            rate_interval_s: 10.0,
            ..Default::default()
        };
        let (mut s, _, clock) = session(vec![ScriptEntry::text("a"); 3], config);
        for _ in 0..3 {
            s.complete(&hello(), &[], None).unwrap();
        }
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(10)]);
    }

    #[test]
    fn audit_exports_one_line_per_event() {
        let (mut s, _, _) = session(vec![ScriptEntry::status(429), ScriptEntry::text("a")], ProviderConfig::default());
        s.complete(&hello(), &[], Some(ResponseFormat::JsonObject)).unwrap();
        let mut out = Vec::new();
        s.write_audit(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["event"], "request");
        assert_eq!(first["body"]["response_format"]["type"], "json_object");
    }
}
