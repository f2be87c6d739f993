//! Single-turn uses of a session: instrument selection, RGB extraction and
//! code extraction.

use chrono::{DateTime, Utc};
use helios_core::RgbSetting;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::message::ChatMessage;
use crate::session::{AuditEvent, ResponseFormat, Session};
use crate::LlmError;

const SELECTION_PREAMBLE: &str = "You help users of a teaching laboratory pick an instrument. \
Choose the single instrument from the list below that best matches what the user wants to do, \
name it, and give a short reason for the choice.";

const RGB_INSTRUCTIONS: &str = "Read the red, green and blue LED levels requested by the user. \
Reply with one JSON object that has exactly the keys \"R\", \"G\" and \"B\", each a number. \
Use 0.0 for any level the user did not give. Reply with the JSON object only.";

const CODE_INSTRUCTIONS: &str = "Write the program the user asks for. \
Reply with one JSON object of the form {\"code\": \"<program text>\"} and nothing else.";

/// System prompt listing every catalog entry verbatim.
pub fn selection_prompt(catalog: &[(&str, &str)]) -> String {
    let mut s = format!("{SELECTION_PREAMBLE}\n\nAvailable instruments:\n");
    for (name, description) in catalog {
        s.push_str(&format!("\n{name}\n{description}\n"));
    }
    s
}

/// Asks the model which instrument fits `need`; the reply is returned as is.
pub fn select_instrument(catalog: &[(&str, &str)], need: &str, session: &mut Session) -> Result<String, LlmError> {
    if catalog.is_empty() {
        return Err(LlmError::Argument("instrument catalog is empty".into()));
    }
    if need.trim().is_empty() {
        return Err(LlmError::Argument("describe what you need to measure".into()));
    }
    let messages = [ChatMessage::system(selection_prompt(catalog)), ChatMessage::user(need)];
    let reply = session.complete(&messages, &[], None)?;
    Ok(reply.content.unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgbExtraction {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl RgbExtraction {
    pub fn setting(&self) -> RgbSetting {
        RgbSetting::new(self.r, self.g, self.b)
    }
}

/// Drops a surrounding Markdown code fence, if any.
fn unfence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn json_object(content: &str) -> Result<serde_json::Map<String, Value>, String> {
    match serde_json::from_str::<Value>(unfence(content)) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("the reply must be a JSON object".into()),
        Err(e) => Err(format!("the reply is not valid JSON ({e})")),
    }
}

/// Validates an extraction reply: only R, G and B, numeric, missing as
/// 0.0, clamped into [0, 1].
pub fn parse_rgb(content: &str) -> Result<RgbExtraction, String> {
    let map = json_object(content)?;
    if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "R" | "G" | "B")) {
        return Err(format!("unexpected field `{k}`; only R, G and B are allowed"));
    }
    let level = |key: &str| match map.get(key) {
        None | Some(Value::Null) => Ok(0.0),
        Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(0.0).clamp(0.0, 1.0)),
        Some(other) => Err(format!("field {key} must be a number, got {other}")),
    };
    Ok(RgbExtraction {
        r: level("R")?,
        g: level("G")?,
        b: level("B")?,
    })
}

/// Structured extraction with one corrective re-ask.
pub fn extract_rgb(prompt: &str, session: &mut Session) -> Result<RgbExtraction, LlmError> {
    let mut messages = vec![ChatMessage::system(RGB_INSTRUCTIONS), ChatMessage::user(prompt)];
    let first = session.complete(&messages, &[], Some(ResponseFormat::JsonObject))?;
    let raw = first.content.clone().unwrap_or_default();
    let problem = match parse_rgb(&raw) {
        Ok(rgb) => return Ok(rgb),
        Err(problem) => problem,
    };
    messages.push(ChatMessage::assistant(raw));
    messages.push(ChatMessage::user(format!(
        "That reply could not be used: {problem}. Answer again with only the JSON object."
    )));
    let second = session.complete(&messages, &[], Some(ResponseFormat::JsonObject))?;
    let raw = second.content.unwrap_or_default();
    parse_rgb(&raw).map_err(|reason| LlmError::Extraction { raw, reason })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub prompt: String,
    pub model: String,
    pub at: DateTime<Utc>,
}

/// Generated source code. It is only ever returned as text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeExtraction {
    pub code: String,
    pub provenance: Provenance,
}

pub fn extract_code(prompt: &str, session: &mut Session) -> Result<CodeExtraction, LlmError> {
    let messages = [ChatMessage::system(CODE_INSTRUCTIONS), ChatMessage::user(prompt)];
    let reply = session.complete(&messages, &[], Some(ResponseFormat::JsonObject))?;
    let raw = reply.content.unwrap_or_default();
    let map = json_object(&raw).map_err(|reason| LlmError::Extraction {
        raw: raw.clone(),
        reason,
    })?;
    let code = match map.get("code") {
        Some(Value::String(code)) => code.clone(),
        Some(_) => {
            return Err(LlmError::Extraction {
                raw,
                reason: "field `code` must be a string".into(),
            })
        }
        None => {
            return Err(LlmError::Extraction {
                raw,
                reason: "reply has no `code` field".into(),
            })
        }
    };
    let AuditEvent::Provenance { at, model, prompt, .. } = session.record_provenance("code", prompt) else {
        unreachable!("record_provenance returns a provenance event")
    };
    Ok(CodeExtraction {
        code,
        provenance: Provenance { prompt, model, at },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_rules() {
        assert_eq!(
            parse_rgb(r#"{"R": 0.1, "G": 0.0, "B": 0.3}"#).unwrap(),
            RgbExtraction { r: 0.1, g: 0.0, b: 0.3 }
        );
        assert_eq!(parse_rgb(r#"{"R": 2.5}"#).unwrap(), RgbExtraction { r: 1.0, g: 0.0, b: 0.0 });
        assert_eq!(
            parse_rgb("```json\n{\"B\": -1, \"G\": null}\n```").unwrap(),
            RgbExtraction { r: 0.0, g: 0.0, b: 0.0 }
        );
        assert!(parse_rgb("Sure! R is 0.1").is_err());
        assert!(parse_rgb(r#"{"R": "0.1"}"#).is_err());
        assert!(parse_rgb(r#"{"red": 0.1}"#).is_err());
        assert!(parse_rgb("[0.1, 0, 0.3]").is_err());
    }

    #[test]
    fn prompt_lists_each_entry_verbatim() {
        let p = selection_prompt(&[("A", "alpha does one thing"), ("B", "beta does two")]);
        assert!(p.contains("\nA\nalpha does one thing\n"));
        assert!(p.contains("\nB\nbeta does two\n"));
    }
}
