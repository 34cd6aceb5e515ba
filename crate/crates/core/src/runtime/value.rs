use std::fmt;
use std::str::FromStr;

/// A runtime value. The derived order (Int < Bool < Str, then by payload)
/// is the canonical order used when printing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn ty(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Bool(_) => ValueType::Bool,
            Value::Str(_) => ValueType::Str,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "\"{}\"", escape(s)),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

/// Result type of a declared extern function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueType {
    Bool,
    Int,
    Str,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Bool => "bool",
            ValueType::Int => "int",
            ValueType::Str => "string",
        })
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bool" => Ok(ValueType::Bool),
            "int" => Ok(ValueType::Int),
            "string" => Ok(ValueType::Str),
            other => Err(format!("unknown type `{other}`, expected bool, int or string")),
        }
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// Parses a value literal: an integer, `true`, `false` or a double-quoted
/// string with `\\ \" \n \t` escapes.
pub fn parse_value(text: &str) -> Result<Value, String> {
    let t = text.trim();
    match t {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Some(rest) = t.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = rest.chars();
        loop {
            match chars.next() {
                None => return Err("unterminated string literal".into()),
                Some('"') => break,
                Some('\\') => match chars.next() {
                    Some('\\') => out.push('\\'),
                    Some('"') => out.push('"'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c) => return Err(format!("unknown escape `\\{c}`")),
                    None => return Err("unterminated string literal".into()),
                },
                Some(c) => out.push(c),
            }
        }
        if !chars.as_str().trim().is_empty() {
            return Err("trailing characters after string literal".into());
        }
        return Ok(Value::Str(out));
    }
    t.parse::<i64>()
        .map(Value::Int)
        .map_err(|_| format!("invalid value `{t}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        assert_eq!(parse_value("5"), Ok(Value::Int(5)));
        assert_eq!(parse_value("-12"), Ok(Value::Int(-12)));
        assert_eq!(parse_value("true"), Ok(Value::Bool(true)));
        assert_eq!(parse_value(r#""a\"b\n""#), Ok(Value::str("a\"b\n")));
        assert!(parse_value("\"open").is_err());
        assert!(parse_value("x1").is_err());
    }

    #[test]
    fn canonical_order() {
        let mut v = vec![Value::str("a"), Value::Bool(false), Value::Int(3)];
        v.sort();
        assert_eq!(v, vec![Value::Int(3), Value::Bool(false), Value::str("a")]);
    }

    #[test]
    fn display_round_trips() {
        for v in [Value::Int(i64::MIN), Value::Bool(true), Value::str("t\\\t\"")] {
            assert_eq!(parse_value(&v.to_string()), Ok(v));
        }
    }
}
