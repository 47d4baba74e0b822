//! Flat `key = value` text used by config files and frame manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Parses `key = value` lines. `#` starts a comment line; duplicate keys
/// are rejected.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(i + 1, "expected `key = value`"));
        };
        let k = k.trim();
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(Error::parse(i + 1, format!("invalid key {k:?}")));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::parse(i + 1, format!("duplicate key {k:?}")));
        }
    }
    Ok(out)
}

pub fn format_kv<'a>(entries: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Typed lookup of a required key.
pub fn require<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Validation(format!("missing key {key:?}")))?;
    raw.parse()
        .map_err(|_| Error::Validation(format!("invalid value {raw:?} for {key:?}")))
}
