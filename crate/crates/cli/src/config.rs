//! Key-value config files and flag/file/default resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Parsed `key = value` file. `#` starts a comment; blank lines are ignored.
/// Underscores in keys are read as hyphens, so `lambda_plus` and
/// `lambda-plus` name the same setting.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = normalize(k.trim());
            let value = v.trim().trim_matches('"').to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key or value", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }
}

fn normalize(key: &str) -> String {
    key.replace('_', "-").to_ascii_lowercase()
}

/// Resolves each setting as flag > config file > default and records the
/// outcome for the manifest.
#[derive(Debug)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: ConfigFile) -> Self {
        Self { file: file.entries, used: BTreeSet::new(), echo: BTreeMap::new() }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match self.get_opt(key, flag)? {
            Some(v) => v,
            None => {
                self.echo.insert(key.to_string(), serde_json::to_value(&default)?);
                default
            }
        };
        Ok(v)
    }

    /// Like [`get`](Self::get) but with no default; absent settings echo as null.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse::<T>()
                        .map_err(|e| CliError::Config(format!("bad value `{s}` for `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        self.echo.insert(key.to_string(), serde_json::to_value(&v)?);
        Ok(v)
    }

    /// Fails on config keys no resolver call asked for.
    pub fn finish(self) -> Result<BTreeMap<String, Value>, CliError> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Config(format!("unknown config key(s): {}", names.join(", "))));
        }
        Ok(self.echo)
    }
}

/// Inclusive `lo:hi:step` grid; values are rounded to 12 decimals so that
/// `-0.3` prints as `-0.3`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("grid `{spec}` is not of the form lo:hi:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(CliError::Config(format!("grid `{spec}` has too many points")));
    }
    Ok((0..n)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
