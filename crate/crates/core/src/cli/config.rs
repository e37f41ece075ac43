//! Flat `key = value` config files with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "BIV_SEED";
pub const DEFAULT_SEED: u64 = 20240815;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", k + 1)))?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(Error::Parse(format!("config line {}: empty key", k + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("config line {}: duplicate key '{key}'", k + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("config key '{key}': cannot parse '{v}'"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("config key '{key}': cannot parse '{s}'")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Parse(format!(
                "unknown config key '{k}' (expected one of: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

/// Flag, then config file, then default.
pub fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get(key)?.unwrap_or(default)),
    }
}

pub fn pick_list<T: FromStr>(flag: Option<Vec<T>>, file: &ConfigFile, key: &str, default: Vec<T>) -> Result<Vec<T>> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get_list(key)?.unwrap_or(default)),
    }
}

/// Flag, then config file, then `BIV_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = file.get("seed")? {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{SEED_ENV}='{v}' is not a 64-bit unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}
