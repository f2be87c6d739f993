//! Chat-completions bridge for the instrument stack.
//!
//! Everything runs through a [`Session`], which owns the request budget,
//! retry and rate-limit pacing, and the audit trail. The bridge can call
//! registered instrument tools but never executes generated code.

mod message;
mod provider;
mod script;
mod session;
mod tasks;
mod tools;

pub use message::{ChatMessage, ParamSpec, ParamType, Role, ToolCall, ToolSpec};
pub use provider::{
    Clock, HttpTransport, ManualClock, ProviderConfig, RawResponse, SystemClock, Transport, TransportError,
};
pub use script::{Script, ScriptEntry, ScriptError, ScriptedCall, ScriptedProvider, SCRIPT_SCHEMA};
pub use session::{backoff_delay, AuditEvent, BudgetResource, ResponseFormat, Session, Usage};
pub use tasks::{
    extract_code, extract_rgb, parse_rgb, select_instrument, selection_prompt, CodeExtraction, Provenance,
    RgbExtraction,
};
pub use tools::{
    build_tool_spec, check_transcript, instrument_tool, tool_call_loop, LoopOutcome, ToolFn, ToolLoopError,
    ToolRegistry, DEFAULT_MAX_ROUNDS,
};

use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Argument(String),
    #[error("{resource:?} budget of {limit} exhausted", resource = resource)]
    Budget { resource: BudgetResource, limit: u64 },
    #[error("provider failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("unexpected provider response{}: {message}", status.map(|s| format!(" ({s})")).unwrap_or_default())]
    Protocol { status: Option<u16>, message: String },
    #[error("could not extract a structured answer: {reason}; reply was: {raw}")]
    Extraction { raw: String, reason: String },
    #[error("model asked for unknown tool `{0}`")]
    UnknownTool(String),
    #[error("no final answer after {0} round(s)")]
    MaxRounds(usize),
}

/// Messages as newline-delimited JSON.
pub fn write_transcript<W: Write>(messages: &[ChatMessage], mut w: W) -> std::io::Result<()> {
    for m in messages {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
