//! `--set key=value` overrides on the parsed scenario document.
//!
//! Keys are dotted paths; numeric segments index arrays. The value is taken
//! as JSON when it parses as JSON and as a plain string otherwise, so
//! `groups.0.q=0.4`, `agents.1.budget=null` and `seed=7` all work.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OverrideError {
    #[error("override `{0}` is not of the form key=value")]
    Malformed(String),
    #[error("override `{key}`: {reason}")]
    Path { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    segments: Vec<String>,
    pub value: Value,
}

impl Override {
    pub fn parse(s: &str) -> Result<Self, OverrideError> {
        let (key, raw) = s.split_once('=').ok_or_else(|| OverrideError::Malformed(s.to_string()))?;
        let key = key.trim();
        let segments: Vec<String> = key.split('.').map(str::to_string).collect();
        if key.is_empty() || segments.iter().any(|seg| seg.is_empty()) {
            return Err(OverrideError::Malformed(s.to_string()));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override { key: key.to_string(), segments, value })
    }

    /// Sets the value, creating a missing object key at the last segment.
    /// Array indices must exist.
    pub fn apply(&self, doc: &mut Value) -> Result<(), OverrideError> {
        let err = |reason: String| OverrideError::Path { key: self.key.clone(), reason };
        let (last, parents) = self.segments.split_last().expect("at least one segment");
        let mut node = doc;
        let mut walked = Vec::new();
        for seg in parents {
            walked.push(seg.as_str());
            node = match node {
                Value::Object(map) => map.get_mut(seg).ok_or_else(|| err(format!("no field `{}`", walked.join("."))))?,
                Value::Array(items) => {
                    let len = items.len();
                    let i: usize = seg.parse().map_err(|_| err(format!("`{}` indexes a list", walked.join("."))))?;
                    items.get_mut(i).ok_or_else(|| err(format!("index {i} out of range (length {len})")))?
                }
                _ => return Err(err(format!("`{}` is not an object or list", walked.join(".")))),
            };
        }
        match node {
            Value::Object(map) => {
                map.insert(last.clone(), self.value.clone());
            }
            Value::Array(items) => {
                let len = items.len();
                let i: usize = last.parse().map_err(|_| err(format!("`{last}` indexes a list")))?;
                *items.get_mut(i).ok_or_else(|| err(format!("index {i} out of range (length {len})")))? = self.value.clone();
            }
            _ => return Err(err("parent is not an object or list".into())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parse_values() {
        assert_eq!(Override::parse("seed=7").unwrap().value, json!(7));
        assert_eq!(Override::parse("groups.0.q=0.4").unwrap().value, json!(0.4));
        assert_eq!(Override::parse("x=\"0.4\"").unwrap().value, json!("0.4"));
        assert_eq!(Override::parse("x=abc").unwrap().value, json!("abc"));
        assert_eq!(Override::parse("x=").unwrap().value, json!(""));
        assert!(Override::parse("novalue").is_err());
        assert!(Override::parse("=3").is_err());
        assert!(Override::parse("a..b=3").is_err());
    }

    #[test]
    fn apply_paths() {
        let mut doc = json!({"seed": 1, "groups": [{"q": "0.5"}]});
        Override::parse("groups.0.q=0.4").unwrap().apply(&mut doc).unwrap();
        Override::parse("seed=9").unwrap().apply(&mut doc).unwrap();
        Override::parse("groups.0.fee_rate=0.003").unwrap().apply(&mut doc).unwrap();
        assert_eq!(doc, json!({"seed": 9, "groups": [{"q": 0.4, "fee_rate": 0.003}]}));

        let e = Override::parse("groups.3.q=1").unwrap().apply(&mut doc).unwrap_err();
        assert!(e.to_string().contains("out of range"));
        let e = Override::parse("groups.x.q=1").unwrap().apply(&mut doc).unwrap_err();
        assert!(e.to_string().contains("indexes a list"));
        let e = Override::parse("seed.a=1").unwrap().apply(&mut doc).unwrap_err();
        assert!(e.to_string().contains("not an object"));
        let e = Override::parse("nothere.a=1").unwrap().apply(&mut doc).unwrap_err();
        assert!(e.to_string().contains("no field"));
    }
}
