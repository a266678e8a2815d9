//! Pulling structured data out of chat responses.
//!
//! Models wrap JSON in prose and code fences. The extractor takes the first
//! fenced block that parses, and falls back to the first balanced JSON value
//! anywhere in the text.

use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatRequest, Gateway, GatewayError, ModelSpec};

#[derive(Debug, Error)]
pub enum AskError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unusable model output after {attempts} attempt(s): {}", violations.join("; "))]
    Invalid { attempts: u32, violations: Vec<String>, raw: String },
}

/// First JSON value found in `text`, preferring fenced blocks.
pub fn extract_json(text: &str) -> Option<Value> {
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let Some(end) = after[body_start..].find("```") else { break };
        let block = &after[body_start..body_start + end];
        if let Ok(value) = serde_json::from_str::<Value>(block.trim()) {
            return Some(value);
        }
        rest = &after[body_start + end + 3..];
    }
    for (i, c) in text.char_indices() {
        if c == '{' || c == '[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(value)) = stream.next() {
                return Some(value);
            }
        }
    }
    None
}

/// Parses `text` as a JSON object or reports why not.
pub fn json_object(text: &str) -> Result<serde_json::Map<String, Value>, Vec<String>> {
    match extract_json(text) {
        Some(Value::Object(map)) => Ok(map),
        Some(_) => Err(vec!["expected a JSON object".into()]),
        None => Err(vec!["no JSON block found in the reply".into()]),
    }
}

pub fn repair_prompt(user_prompt: &str, violations: &[String]) -> String {
    let mut out = String::from(user_prompt);
    out.push_str("\n\nYour previous reply could not be used:\n");
    for v in violations {
        out.push_str("- ");
        out.push_str(v);
        out.push('\n');
    }
    out.push_str("Reply again with a single fenced ```json block that fixes these problems.");
    out
}

/// Asks, parses, and re-asks up to `max_retries` times with the violation
/// list appended to the prompt. Gateway errors are returned immediately.
pub fn ask<T>(
    gateway: &Gateway,
    model: &ModelSpec,
    system: &str,
    user: &str,
    max_retries: u32,
    parse: impl Fn(&str) -> Result<T, Vec<String>>,
) -> Result<T, AskError> {
    let mut prompt = user.to_string();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let raw = gateway.complete(&ChatRequest::new(model, system, prompt.as_str()))?;
        match parse(&raw) {
            Ok(value) => return Ok(value),
            Err(violations) if attempts <= max_retries => {
                log::debug!("re-prompting {} after: {}", model.label(), violations.join("; "));
                prompt = repair_prompt(user, &violations);
            }
            Err(violations) => return Err(AskError::Invalid { attempts, violations, raw }),
        }
    }
}
