//! Sectioned `key = value` text shared by manifests and run configs.
//!
//! ```text
//! # comment
//! top = level
//! [kind optional-name]
//! key = value
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CoralError, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Section {
    /// Empty for the keys preceding the first header.
    pub kind: String,
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub(crate) struct Document {
    pub path: PathBuf,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| CoralError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut sections = vec![Section {
            kind: String::new(),
            name: None,
            line: 0,
            entries: Vec::new(),
        }];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let inner = header
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("unterminated section header '{content}'")))?
                    .trim();
                let mut words = inner.split_whitespace();
                let kind = words
                    .next()
                    .ok_or_else(|| err(line, "empty section header".into()))?
                    .to_string();
                let name = words.next().map(str::to_string);
                if words.next().is_some() {
                    return Err(err(line, format!("section header '{content}' has too many words")));
                }
                sections.push(Section {
                    kind,
                    name,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err(line, "missing key".into()));
            }
            sections.last_mut().unwrap().entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            sections,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoralError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> CoralError {
        CoralError::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Parses `entry.value` as `T`, reporting the entry's line on failure.
    pub fn value<T: FromStr>(&self, entry: &Entry) -> Result<T> {
        entry.value.parse().map_err(|_| {
            self.error(
                entry.line,
                format!("invalid value '{}' for '{}'", entry.value, entry.key),
            )
        })
    }
}
