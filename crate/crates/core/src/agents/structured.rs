//! Strict JSON replies with a required-key schema.

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonKind {
    Bool,
    Number,
    String,
    Array,
    Object,
}

impl JsonKind {
    fn matches(self, v: &Value) -> bool {
        match self {
            JsonKind::Bool => v.is_boolean(),
            JsonKind::Number => v.is_number(),
            JsonKind::String => v.is_string(),
            JsonKind::Array => v.is_array(),
            JsonKind::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuredOutputError {
    #[error("reply is not a JSON object: {0}")]
    NotJson(String),
    #[error("reply is missing key `{0}`")]
    MissingKey(String),
    #[error("key `{0}` has the wrong kind")]
    WrongKind(String),
    #[error("reply content is invalid: {0}")]
    Invalid(String),
}

/// Removes a surrounding markdown code fence, with or without a language tag.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a JSON object and checks required keys; other keys are kept.
pub fn parse_structured_output(text: &str, schema: &[(&str, JsonKind)]) -> Result<Map<String, Value>, StructuredOutputError> {
    let value: Value = serde_json::from_str(strip_fences(text)).map_err(|e| StructuredOutputError::NotJson(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(StructuredOutputError::NotJson("top-level value is not an object".into()));
    };
    for (key, kind) in schema {
        match map.get(*key) {
            None => return Err(StructuredOutputError::MissingKey(key.to_string())),
            Some(v) if !kind.matches(v) => return Err(StructuredOutputError::WrongKind(key.to_string())),
            Some(_) => {}
        }
    }
    Ok(map)
}
