//! Scripted stand-in for a chat-completions provider.
//!
//! ```json
//! {
//!   "schema": "helios-llm-script/1",
//!   "responses": [
//!     {"status": 429},
//!     {"content": "plain answer"},
//!     {"tool_calls": [{"id": "call_1", "name": "CLRGB", "arguments": "{\"G\": 0.5}"}]},
//!     {"echo_system": true},
//!     {"status": 200, "body": "not json"}
//!   ]
//! }
//! ```
//!
//! Entries are consumed in order, one per request. `content` may contain
//! `{{last_tool}}`, replaced by the most recent tool message in the request.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::message::ToolCall;
use crate::provider::{RawResponse, Transport, TransportError};

pub const SCRIPT_SCHEMA: &str = "helios-llm-script/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    /// Raw body; a string is sent verbatim, anything else as JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptedCall>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub echo_system: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_s: Option<f64>,
    /// Fail at the transport level instead of answering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

impl ScriptEntry {
    pub fn text(content: impl Into<String>) -> Self {
        ScriptEntry {
            content: Some(content.into()),
            ..Default::default()
        }
    }

    pub fn status(status: u16) -> Self {
        ScriptEntry {
            status: Some(status),
            ..Default::default()
        }
    }

    pub fn call(id: &str, name: &str, arguments: &str) -> Self {
        ScriptEntry {
            tool_calls: vec![ScriptedCall {
                id: id.into(),
                name: name.into(),
                arguments: arguments.into(),
            }],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub schema: String,
    pub responses: Vec<ScriptEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read provider script {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("malformed provider script: {0}")]
    Parse(String),
    #[error("unsupported provider script schema `{0}` (expected `{SCRIPT_SCHEMA}`)")]
    Schema(String),
}

impl Script {
    pub fn new(responses: Vec<ScriptEntry>) -> Self {
        Script {
            schema: SCRIPT_SCHEMA.to_string(),
            responses,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let s: Script = serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;
        if s.schema != SCRIPT_SCHEMA {
            return Err(ScriptError::Schema(s.schema));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}

/// Replays a [`Script`] and records every request body it receives.
#[derive(Clone)]
pub struct ScriptedProvider {
    entries: Arc<Mutex<std::collections::VecDeque<ScriptEntry>>>,
    requests: Arc<Mutex<Vec<Value>>>,
}

fn message_text(request: &Value, role: &str, last: bool) -> Option<String> {
    let msgs = request["messages"].as_array()?;
    let mut it: Box<dyn Iterator<Item = &Value>> = if last {
        Box::new(msgs.iter().rev())
    } else {
        Box::new(msgs.iter())
    };
    it.find(|m| m["role"] == role)
        .and_then(|m| m["content"].as_str())
        .map(str::to_string)
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        ScriptedProvider {
            entries: Arc::new(Mutex::new(script.responses.into())),
            requests: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    fn render(entry: &ScriptEntry, request: &Value) -> RawResponse {
        let status = entry.status.unwrap_or(200);
        let retry_after = entry.retry_after_s.map(Duration::from_secs_f64);
        if let Some(body) = &entry.body {
            let body = match body {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return RawResponse {
                status,
                body,
                retry_after,
            };
        }
        if status != 200 {
            return RawResponse {
                status,
                body: json!({"error": {"message": format!("scripted status {status}")}}).to_string(),
                retry_after,
            };
        }
        let content = if entry.echo_system {
            message_text(request, "system", false)
        } else {
            entry.content.as_ref().map(|c| {
                let last_tool = message_text(request, "tool", true).unwrap_or_default();
                c.replace("{{last_tool}}", &last_tool)
            })
        };
        let calls: Vec<ToolCall> = entry
            .tool_calls
            .iter()
            .map(|c| ToolCall {
                id: c.id.clone(),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        let mut message = json!({"role": "assistant", "content": content});
        if !calls.is_empty() {
            message["tool_calls"] = serde_json::to_value(&calls).expect("calls serialize");
        }
        let mut body = json!({
            "object": "chat.completion",
            "model": request["model"],
            "choices": [{"index": 0, "message": message, "finish_reason": if calls.is_empty() { "stop" } else { "tool_calls" }}],
        });
        if let Some(t) = entry.total_tokens {
            body["usage"] = json!({"total_tokens": t});
        }
        RawResponse {
            status,
            body: body.to_string(),
            retry_after,
        }
    }
}

impl Transport for ScriptedProvider {
    fn send(&mut self, request: &Value) -> Result<RawResponse, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        let entry = self.entries.lock().unwrap().pop_front().ok_or_else(|| TransportError {
            message: "provider script exhausted".into(),
            retryable: false,
        })?;
        if let Some(message) = &entry.transport_error {
            return Err(TransportError {
                message: message.clone(),
                retryable: true,
            });
        }
        Ok(Self::render(&entry, request))
    }
}
