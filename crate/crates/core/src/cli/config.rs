//! Line-based experiment configuration: `[section]` headers, `key = value`
//! pairs, `#` comments, comma-separated arrays.
//!
//! A [`Section`] records every key it is asked for together with the value
//! finally used (given or default); [`Section::finish`] rejects keys nobody
//! asked for and returns the resolved listing written to run manifests.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn config_err(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl Config {
    pub fn parse(text: &str, known_sections: &[&str]) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("line {}", i + 1);
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(&at, "unterminated section header"))?
                    .trim();
                if !known_sections.contains(&name) {
                    return Err(config_err(name, format!("unknown section (known: {})", known_sections.join(", "))));
                }
                if sections.contains_key(name) {
                    return Err(config_err(name, "section appears twice"));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(&at, "expected `key = value`"))?;
            let sec = current
                .as_ref()
                .ok_or_else(|| config_err(k.trim(), "key outside of any section"))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(config_err(&at, "empty key"));
            }
            let map = sections.get_mut(sec).expect("section exists");
            if map.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(config_err(format!("{sec}.{key}"), "key appears twice"));
            }
        }
        Ok(Self { sections })
    }

    /// The named section; empty when absent.
    pub fn section(&self, name: &str) -> Section {
        Section {
            name: name.to_string(),
            given: self.sections.get(name).cloned().unwrap_or_default(),
            resolved: Vec::new(),
        }
    }
}

/// Keys of one section, consumed with typed getters.
#[derive(Debug)]
pub struct Section {
    name: String,
    given: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Section {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn err(&self, key: &str, message: impl Into<String>) -> Error {
        config_err(format!("{}.{key}", self.name), message)
    }

    /// Replace (or supply) a raw value before it is read, e.g. from a flag.
    pub fn set(&mut self, key: &str, raw: impl Into<String>) {
        self.given.insert(key.to_string(), raw.into());
    }

    /// Raw value of `key` if present, without consuming it.
    pub fn peek(&self, key: &str) -> Option<&str> {
        self.given.get(key).map(String::as_str)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.given.remove(key)
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.push((key.to_string(), value));
    }

    fn parse_one<T: FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.trim()
            .parse()
            .map_err(|_| self.err(key, format!("cannot parse `{raw}` as {}", std::any::type_name::<T>())))
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T> {
        let v = match self.take(key) {
            Some(raw) => self.parse_one(key, &raw)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn get_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = match self.take(key) {
            Some(raw) => parse_f64(&raw).ok_or_else(|| self.err(key, format!("cannot parse `{raw}` as a number")))?,
            None => default,
        };
        self.record(key, fmt_f64(v));
        Ok(v)
    }

    pub fn get_opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            Some(raw) => {
                let v = parse_f64(&raw).ok_or_else(|| self.err(key, format!("cannot parse `{raw}` as a number")))?;
                self.record(key, fmt_f64(v));
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            Some(raw) => {
                let v: T = self.parse_one(key, &raw)?;
                self.record(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn get_str(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let v = self.take(key).unwrap_or_else(|| default.to_string());
        if !allowed.contains(&v.as_str()) {
            return Err(self.err(key, format!("`{v}` is not one of {}", allowed.join(", "))));
        }
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn get_list<T: FromStr + Display>(&mut self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        let v: Vec<T> = match self.take(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| self.parse_one(key, s))
                .collect::<Result<_>>()?,
            None => default.to_vec(),
        };
        self.record(key, v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        Ok(v)
    }

    pub fn get_f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self.take(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| parse_f64(s).ok_or_else(|| self.err(key, format!("cannot parse `{}` as a number", s.trim()))))
                .collect::<Result<_>>()?,
            None => default.to_vec(),
        };
        self.record(key, v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "));
        Ok(v)
    }

    /// Fails on keys that no getter consumed; returns the resolved listing.
    pub fn finish(self) -> Result<Vec<(String, String)>> {
        if let Some(k) = self.given.keys().next() {
            return Err(config_err(format!("{}.{k}", self.name), "unknown key"));
        }
        Ok(self.resolved)
    }
}

fn parse_f64(raw: &str) -> Option<f64> {
    match raw.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        s => s.parse().ok().filter(|v: &f64| !v.is_nan()),
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
