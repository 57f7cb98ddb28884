//! Plain-text `key = value` configuration files. Flags given on the command
//! line always override file values; file values override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use lstat::{Error, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, found {raw:?}"),
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Typed lookup; a present-but-unparseable value is an error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Domain(format!("config key {key} has unusable value {raw:?}"))
            }),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }
}

/// Flag value, else config value, else default.
pub fn resolve<T: FromStr + Clone>(
    flag: Option<T>,
    config: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(config.get::<T>(key)?.unwrap_or(default))
}

/// Flag value, else config value, else none.
pub fn resolve_opt(flag: Option<String>, config: &ConfigFile, key: &str) -> Option<String> {
    flag.or_else(|| config.get_string(key))
}
