use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::value::{parse_value, Value};
use crate::syntax::LocVar;

/// One process's memory.
pub type PStore = BTreeMap<String, Value>;

/// Choreographic store: process name to process store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CStore {
    procs: BTreeMap<String, PStore>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("store line {line}: {message}")]
pub struct StoreParseError {
    pub line: usize,
    pub message: String,
}

impl CStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn process(&self, p: &str) -> Option<&PStore> {
        self.procs.get(p)
    }

    pub fn get(&self, p: &str, x: &str) -> Option<&Value> {
        self.procs.get(p)?.get(x)
    }

    /// `Σ[p.x ↦ v]`.
    pub fn set(&mut self, p: &str, x: &str, v: Value) {
        self.procs
            .entry(p.to_string())
            .or_default()
            .insert(x.to_string(), v);
    }

    pub fn with(mut self, p: &str, x: &str, v: impl Into<Value>) -> Self {
        self.set(p, x, v.into());
        self
    }

    /// Every located variable with its value, sorted by process then variable.
    pub fn iter(&self) -> impl Iterator<Item = (LocVar, &Value)> {
        self.procs.iter().flat_map(|(p, vars)| {
            vars.iter()
                .map(move |(x, v)| (LocVar::new(p.as_str(), x.as_str()), v))
        })
    }

    pub fn domain(&self) -> Vec<LocVar> {
        self.iter().map(|(lv, _)| lv).collect()
    }

    pub fn len(&self) -> usize {
        self.procs.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromIterator<(LocVar, Value)> for CStore {
    fn from_iter<T: IntoIterator<Item = (LocVar, Value)>>(iter: T) -> Self {
        let mut s = CStore::new();
        for (lv, v) in iter {
            s.set(&lv.proc, &lv.var, v);
        }
        s
    }
}

/// Store-file format: one `PROC.VAR = VALUE` per line, sorted.
impl fmt::Display for CStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (lv, v) in self.iter() {
            writeln!(f, "{lv} = {v}")?;
        }
        Ok(())
    }
}

/// Parses a store file. `#` starts a comment; blank lines are ignored.
pub fn parse_store(text: &str) -> Result<CStore, StoreParseError> {
    let mut store = CStore::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| StoreParseError { line, message };
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let (lhs, rhs) = content
            .split_once('=')
            .ok_or_else(|| err("expected `PROC.VAR = VALUE`".into()))?;
        let (p, x) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| err(format!("expected PROC.VAR, found `{}`", lhs.trim())))?;
        if !is_name(p) || !is_name(x) {
            return Err(err(format!("invalid located variable `{}`", lhs.trim())));
        }
        if store.get(p, x).is_some() {
            return Err(err(format!("duplicate entry for {p}.{x}")));
        }
        let v = parse_value(rhs).map_err(err)?;
        store.set(p, x, v);
    }
    Ok(store)
}

fn is_name(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// `#` inside a string literal is not a comment.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
