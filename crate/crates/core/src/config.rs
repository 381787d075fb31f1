//! Flat `key=value` text files.
//!
//! Every configurable type in the crate (building parameters, reward and
//! episode settings, agent hyperparameters) is read from the same format:
//! one assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys are matched exactly; unknown keys are rejected by the consumer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Parsed assignments, remembering where each key came from.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    origin: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(&origin, line_no, format!("expected key=value, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::parse(&origin, line_no, "empty key"));
            }
            if entries
                .insert(key.to_string(), (value.to_string(), line_no))
                .is_some()
            {
                return Err(Error::parse(&origin, line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { origin, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse `key=value` override strings (as given on a command line).
    pub fn from_overrides<S: AsRef<str>>(overrides: &[S]) -> Result<Self> {
        let joined = overrides
            .iter()
            .map(|s| s.as_ref())
            .collect::<Vec<_>>()
            .join("\n");
        Self::parse(&joined, "<overrides>")
    }

    /// Later assignments win.
    pub fn merged(mut self, other: KeyValues) -> Self {
        self.entries.extend(other.entries);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Returns a copy holding only the keys listed, leaving the rest behind.
    pub fn take(&mut self, keys: &[&str]) -> KeyValues {
        let mut taken = BTreeMap::new();
        for key in keys {
            if let Some(entry) = self.entries.remove(*key) {
                taken.insert(key.to_string(), entry);
            }
        }
        KeyValues {
            origin: self.origin.clone(),
            entries: taken,
        }
    }

    /// Removes every `prefix.key` entry and returns them as `key`.
    pub fn section(&mut self, prefix: &str) -> KeyValues {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self
            .entries
            .keys()
            .filter(|k| k.starts_with(&dotted))
            .cloned()
            .collect();
        let mut taken = BTreeMap::new();
        for key in keys {
            let entry = self.entries.remove(&key).expect("key listed above");
            taken.insert(key[dotted.len()..].to_string(), entry);
        }
        KeyValues {
            origin: self.origin.clone(),
            entries: taken,
        }
    }

    /// Fails if any key falls outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{}:{line}: unknown key `{key}` (expected one of: {})",
                    self.origin.display(),
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "{}:{line}: cannot parse value `{value}` for key `{key}`",
                    self.origin.display()
                ))
            }),
        }
    }

    /// Overwrite `slot` when `key` is present.
    pub fn apply<T: std::str::FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let kv = KeyValues::parse("# header\n\nw = 0.1 # trailing\nseed=3\n", "t").unwrap();
        assert_eq!(kv.get("w"), Some("0.1"));
        assert_eq!(kv.parse_value::<u64>("seed").unwrap(), Some(3));
        assert_eq!(kv.keys().count(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KeyValues::parse("a=1\nnot an assignment\n", "cfg.txt").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg.txt:2"), "{msg}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(KeyValues::parse("a=1\na=2", "t").is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let kv = KeyValues::parse("w=0.1\nbogus=2", "t").unwrap();
        let err = kv.reject_unknown(&["w"]).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_win_over_file_values() {
        let file = KeyValues::parse("w=0.1\ngamma=0.99", "f").unwrap();
        let cli = KeyValues::from_overrides(&["w=0.5"]).unwrap();
        let merged = file.merged(cli);
        assert_eq!(merged.get("w"), Some("0.5"));
        assert_eq!(merged.get("gamma"), Some("0.99"));
    }

    #[test]
    fn sections_strip_their_prefix() {
        let mut kv = KeyValues::parse("sac.batch_size=32\nsac.tau=0.01\ndqn.lr=1\nw=0.2", "t").unwrap();
        let sac = kv.section("sac");
        assert_eq!(sac.get("batch_size"), Some("32"));
        assert_eq!(sac.keys().count(), 2);
        assert_eq!(kv.keys().collect::<Vec<_>>(), vec!["dqn.lr", "w"]);
    }
}
