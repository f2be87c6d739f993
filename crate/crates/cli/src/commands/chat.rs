use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;

use helios_client::{instrument_catalog, Client, InstrumentKind};
use helios_llm::{
    extract_rgb, select_instrument, tool_call_loop, ChatMessage, RgbExtraction, Script, ScriptedProvider, Session,
    SystemClock, ToolRegistry,
};
use serde::Serialize;

use crate::config::CliConfig;
use crate::error::CliError;

/// A scripted provider when a script is configured, else the `[llm]`
/// provider, else a configuration error.
pub fn open_session(config: &CliConfig) -> Result<Session, CliError> {
    if let Some(path) = &config.provider_script {
        let script = Script::load(path).map_err(|e| CliError::Config(e.to_string()))?;
        let provider = config.llm.clone().unwrap_or_default();
        return Ok(Session::new(
            provider,
            Box::new(ScriptedProvider::new(script)),
            Box::new(SystemClock),
        )?);
    }
    match &config.llm {
        Some(provider) => Ok(Session::http(provider.clone())?),
        None => Err(CliError::Config(
            "no LLM provider configured: add an [llm] table to the config file or pass --provider-script".into(),
        )),
    }
}

/// Appends the session's audit events to `path`.
pub fn append_audit(session: &Session, path: &Path) -> Result<(), CliError> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open audit log {}: {e}", path.display())))?;
    session
        .write_audit(std::io::BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("cannot write audit log {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AskReport {
    pub recommendation: String,
}

impl fmt::Display for AskReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.recommendation.trim_end())
    }
}

pub fn ask(session: &mut Session, need: &str) -> Result<AskReport, CliError> {
    Ok(AskReport {
        recommendation: select_instrument(&instrument_catalog(), need, session)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ExtractReport(pub RgbExtraction);

impl fmt::Display for ExtractReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{{R:{:?},G:{:?},B:{:?}}}", self.0.r, self.0.g, self.0.b)
    }
}

pub fn extract(session: &mut Session, text: &str) -> Result<ExtractReport, CliError> {
    Ok(ExtractReport(extract_rgb(text, session)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolChatReport {
    pub answer: String,
    pub rounds: usize,
    pub transcript: Vec<ChatMessage>,
}

impl fmt::Display for ToolChatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.answer.trim_end())
    }
}

/// The tool-calling conversation with every instrument registered against
/// the server behind `client`.
pub fn toolchat(
    session: &mut Session,
    client: &Client,
    question: &str,
    max_rounds: usize,
) -> Result<ToolChatReport, CliError> {
    if question.trim().is_empty() {
        return Err(CliError::Usage("the question must not be empty".into()));
    }
    let (mut registry, specs) = ToolRegistry::with_instruments(client, &InstrumentKind::ALL);
    let out = tool_call_loop(vec![ChatMessage::user(question)], &mut registry, &specs, session, max_rounds)
        .map_err(|e| CliError::from(e.error))?;
    Ok(ToolChatReport {
        answer: out.answer.content.clone().unwrap_or_default(),
        rounds: out.rounds,
        transcript: out.transcript,
    })
}
