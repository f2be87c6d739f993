//! Function calling: tool specs for the instruments, a whitelist registry,
//! and the call/execute/answer loop.

use std::collections::{BTreeMap, HashSet};

use helios_client::{Client, InstrumentKind};
use helios_core::RgbSetting;
use serde_json::{Map, Value};

use crate::message::{ChatMessage, ParamSpec, ParamType, Role, ToolSpec};
use crate::session::Session;
use crate::LlmError;

pub const DEFAULT_MAX_ROUNDS: usize = 4;

fn input_description(input: &str) -> &'static str {
    match input {
        "R" => "The red LED setting, 0 to 1",
        "G" => "The green LED setting, 0 to 1",
        _ => "The blue LED setting, 0 to 1",
    }
}

/// One optional number per instrument input; nothing is required since
/// inputs default to 0.
pub fn build_tool_spec(kind: InstrumentKind) -> ToolSpec {
    ToolSpec {
        name: kind.name().to_string(),
        description: kind.description().to_string(),
        properties: kind
            .input_names()
            .iter()
            .map(|n| {
                (
                    n.to_string(),
                    ParamSpec {
                        kind: ParamType::Number,
                        description: input_description(n).to_string(),
                    },
                )
            })
            .collect(),
        required: Vec::new(),
    }
}

/// Executes a call with its parsed arguments, returning the text handed
/// back to the model.
pub type ToolFn = Box<dyn FnMut(&Map<String, Value>) -> Result<String, String> + Send>;

/// The only functions a model can cause to run.
#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolFn>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, tool: ToolFn) {
        self.tools.insert(name.into(), tool);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    fn call(&mut self, name: &str, args: &Map<String, Value>) -> Option<Result<String, String>> {
        self.tools.get_mut(name).map(|f| f(args))
    }

    /// Registers each instrument against `client`, returning the matching specs.
    pub fn with_instruments(client: &Client, kinds: &[InstrumentKind]) -> (Self, Vec<ToolSpec>) {
        let mut registry = ToolRegistry::new();
        for &kind in kinds {
            let client = client.clone();
            registry.register(
                kind.name(),
                instrument_tool(kind, move |setting| client.measure(kind, setting).map_err(|e| e.to_string())),
            );
        }
        (registry, kinds.iter().map(|k| build_tool_spec(*k)).collect())
    }
}

/// Wraps a measurement function as a tool: reads the instrument's inputs
/// (missing as 0.0) and renders counts like `[1814, 32338, 787]`.
pub fn instrument_tool<F>(kind: InstrumentKind, mut measure: F) -> ToolFn
where
    F: FnMut(RgbSetting) -> Result<Vec<u16>, String> + Send + 'static,
{
    Box::new(move |args| {
        let mut levels = [0.0; 3];
        for (i, name) in ["R", "G", "B"].iter().enumerate() {
            if !kind.input_names().contains(name) {
                continue;
            }
            levels[i] = match args.get(*name) {
                None | Some(Value::Null) => 0.0,
                Some(Value::Number(n)) => n.as_f64().unwrap_or(0.0),
                Some(other) => return Err(format!("argument {name} must be a number, got {other}")),
            };
        }
        let counts = measure(RgbSetting::from_array(levels))?;
        Ok(format!("{counts:?}"))
    })
}

fn parse_arguments(text: &str) -> Result<Map<String, Value>, String> {
    if text.trim().is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(format!("arguments must be a JSON object, got {other}")),
        Err(e) => Err(format!("arguments are not valid JSON: {e}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub answer: ChatMessage,
    /// Every message exchanged, starting with the caller's.
    pub transcript: Vec<ChatMessage>,
    pub rounds: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct ToolLoopError {
    pub error: LlmError,
    pub transcript: Vec<ChatMessage>,
}

/// Runs completions until the model answers in plain text, executing every
/// requested tool call in between.
pub fn tool_call_loop(
    messages: Vec<ChatMessage>,
    registry: &mut ToolRegistry,
    specs: &[ToolSpec],
    session: &mut Session,
    max_rounds: usize,
) -> Result<LoopOutcome, ToolLoopError> {
    let fail = |error, transcript| Err(ToolLoopError { error, transcript });
    if let Some(spec) = specs.iter().find(|s| !registry.contains(&s.name)) {
        return fail(
            LlmError::Argument(format!("tool `{}` has no registered implementation", spec.name)),
            messages,
        );
    }
    if let Some(problem) = specs.iter().find_map(|s| s.validate().err()) {
        return fail(LlmError::Argument(problem), messages);
    }
    let mut transcript = messages;
    for round in 1..=max_rounds {
        let reply = match session.complete(&transcript, specs, None) {
            Ok(r) => r,
            Err(e) => return fail(e, transcript),
        };
        if reply.tool_calls.is_empty() {
            transcript.push(reply.clone());
            return Ok(LoopOutcome {
                answer: reply,
                transcript,
                rounds: round,
            });
        }
        let calls = reply.tool_calls.clone();
        transcript.push(reply);
        for call in calls {
            let content = match parse_arguments(&call.arguments) {
                Err(problem) => problem,
                Ok(args) => match registry.call(&call.name, &args) {
                    None => {
                        let error = LlmError::UnknownTool(call.name.clone());
                        transcript.push(ChatMessage::tool(call.id, error.to_string()));
                        return fail(error, transcript);
                    }
                    Some(Ok(result)) => result,
                    Some(Err(problem)) => format!("error: {problem}"),
                },
            };
            transcript.push(ChatMessage::tool(call.id, content));
        }
    }
    fail(LlmError::MaxRounds(max_rounds), transcript)
}

/// Every tool message answers an earlier, not yet answered, assistant call,
/// in the order the calls were made.
pub fn check_transcript(transcript: &[ChatMessage]) -> Result<(), String> {
    let mut pending: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for (i, m) in transcript.iter().enumerate() {
        m.validate().map_err(|e| format!("message {i}: {e}"))?;
        match m.role {
            Role::Assistant => {
                if !pending.is_empty() {
                    return Err(format!("message {i}: calls {pending:?} were never answered"));
                }
                for c in &m.tool_calls {
                    if !seen.insert(c.id.clone()) {
                        return Err(format!("message {i}: duplicate call id {}", c.id));
                    }
                    pending.push(c.id.clone());
                }
            }
            Role::Tool => {
                let id = m.tool_call_id.as_deref().unwrap_or_default();
                if pending.first().map(String::as_str) != Some(id) {
                    return Err(format!("message {i}: tool result for `{id}` out of order"));
                }
                pending.remove(0);
            }
            _ => {}
        }
    }
    Ok(())
}
