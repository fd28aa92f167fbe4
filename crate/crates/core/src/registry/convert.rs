//! String-to-typed conversion of parameter values.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ParamSpec, ParamType};

/// A converted argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Boolean(bool),
    Integer(i64),
    Float(f64),
    String(String),
}

impl Value {
    pub fn matches(&self, ty: &ParamType) -> bool {
        match (self, ty) {
            (Value::String(_), ParamType::String) => true,
            (Value::String(s), ParamType::Enum(values)) => values.contains(s),
            (Value::Integer(_), ParamType::Integer) => true,
            (Value::Float(_), ParamType::Float) => true,
            (Value::Boolean(_), ParamType::Boolean) => true,
            _ => false,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::String(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot convert {raw:?} for parameter `{param}` to {expected}")]
pub struct ConversionError {
    pub param: String,
    pub expected: String,
    pub raw: String,
}

/// Converts a decoded parameter value to the type declared by `spec`.
/// Strings are passed through untrimmed.
pub fn convert_param(raw: &str, spec: &ParamSpec) -> Result<Value, ConversionError> {
    let fail = || ConversionError {
        param: spec.name.clone(),
        expected: spec.ty.to_string(),
        raw: raw.to_string(),
    };
    match &spec.ty {
        ParamType::String => Ok(Value::String(raw.to_string())),
        ParamType::Enum(values) => {
            if values.iter().any(|v| v == raw) {
                Ok(Value::String(raw.to_string()))
            } else {
                Err(fail())
            }
        }
        ParamType::Boolean => match raw {
            "true" => Ok(Value::Boolean(true)),
            "false" => Ok(Value::Boolean(false)),
            _ => Err(fail()),
        },
        ParamType::Integer => {
            if !is_integer_literal(raw) {
                return Err(fail());
            }
            raw.parse::<i64>().map(Value::Integer).map_err(|_| fail())
        }
        ParamType::Float => {
            if !is_decimal_literal(raw) {
                return Err(fail());
            }
            raw.parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .map(Value::Float)
                .ok_or_else(fail)
        }
    }
}

fn is_integer_literal(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

// [+-] digits [. digits] [e [+-] digits], with digits on at least one side of
// the point. Rejects `inf`, `nan` and hex forms that `f64::from_str` would
// otherwise take.
fn is_decimal_literal(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], Some(&s[i + 1..])),
        None => (s, None),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = all_digits(int)
        && frac.is_none_or(all_digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    let exponent_ok = exponent.is_none_or(is_integer_literal);
    mantissa_ok && exponent_ok
}
