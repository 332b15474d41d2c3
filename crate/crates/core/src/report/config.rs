//! Key-value configuration documents.
//!
//! ```text
//! # comment
//! hosts = 1000
//! mode  = periodic   # trailing comment after whitespace
//! ```
//!
//! One `key = value` per line. Keys are unique; values are trimmed strings
//! interpreted by the consumer.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
}

/// A parsed key-value document with the line of every key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvDocument {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvDocument {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self
            .entries
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            Some((k, (line, _))) => Err(ConfigError::UnknownKey {
                line: *line,
                key: k.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Parses `key` when present.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
                line: *line,
                key: key.to_string(),
                message: format!("{v:?}: {e}"),
            }),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// An error about `key`'s value, located at its line.
    pub fn value_error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            line: self.entries.get(key).map_or(0, |(l, _)| *l),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub fn parse_kv(text: &str) -> Result<KvDocument, ConfigError> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = if raw.trim_start().starts_with('#') {
            ""
        } else {
            match raw.find(" #").or_else(|| raw.find("\t#")) {
                Some(p) => &raw[..p],
                None => raw,
            }
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        if entries
            .insert(k.to_string(), (line, v.trim().to_string()))
            .is_some()
        {
            return Err(ConfigError::Syntax {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(KvDocument { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_comments() {
        let doc = parse_kv("# header\nhosts = 10\nmode= periodic # note\n\nrate=0.5\n").unwrap();
        assert_eq!(doc.get("mode"), Some("periodic"));
        assert_eq!(doc.parse::<u32>("hosts"), Ok(Some(10)));
        assert_eq!(doc.parse_or("missing", 3u32), Ok(3));
        assert_eq!(doc.parse::<f64>("rate"), Ok(Some(0.5)));
        assert!(doc.check_keys(&["hosts", "mode", "rate"]).is_ok());
        assert_eq!(
            doc.check_keys(&["hosts", "mode"]),
            Err(ConfigError::UnknownKey {
                line: 5,
                key: "rate".into()
            })
        );
    }

    #[test]
    fn errors_carry_lines() {
        assert!(matches!(parse_kv("a = 1\nb\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(parse_kv("a = 1\na = 2\n"), Err(ConfigError::Syntax { line: 2, .. })));
        let doc = parse_kv("\nhosts = many\n").unwrap();
        assert!(matches!(doc.parse::<u32>("hosts"), Err(ConfigError::Value { line: 2, .. })));
        assert_eq!(parse_kv(""), Ok(KvDocument::default()));
    }
}
