//! `key = value` defaults file. Keys are long option names; `_` and `-` are
//! interchangeable. `param`, `grid` and `point` may repeat.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::Usage;

#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, Vec<String>>,
}

const KNOWN_KEYS: &[&str] = &[
    "model",
    "face",
    "param",
    "model-file",
    "point",
    "grid",
    "pin",
    "t-span",
    "eps",
    "atol",
    "rtol",
    "max-step",
    "stride",
    "zero-abs",
    "zero-rel",
    "rank-abs",
    "rank-rel",
    "manifold-dist",
    "max-order",
    "projection-radius",
    "max-points",
    "samples",
    "seed",
    "format",
    "output",
];

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(
                    Usage(format!("config line {}: expected key = value", lineno + 1)).into(),
                );
            };
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Usage(format!(
                    "config line {}: unknown key `{}`",
                    lineno + 1,
                    k.trim()
                ))
                .into());
            }
            values.entry(key).or_default().push(v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Last value given for `key`.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key).and_then(|v| v.last()) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Usage(format!("config: cannot parse `{s}` for `{key}`")).into()),
        }
    }

    pub fn get_all(&self, key: &str) -> Vec<String> {
        self.values.get(key).cloned().unwrap_or_default()
    }

    /// Command-line value first, then the file.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Command-line list if non-empty, else the file's.
    pub fn pick_all(&self, flag: &[String], key: &str) -> Vec<String> {
        if flag.is_empty() {
            self.get_all(key)
        } else {
            flag.to_vec()
        }
    }
}
