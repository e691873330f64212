//! Untyped literals (as written in anchors, scripts and JSON) and typed
//! attribute values.

use chrono::NaiveDate;
use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Domain of an attribute or measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    String,
    Integer,
    Decimal,
    Date,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Integer | ValueKind::Decimal)
    }

    /// Parses a raw CSV cell.
    pub fn parse_text(self, text: &str) -> Option<Value> {
        match self {
            ValueKind::String => Some(Value::Str(text.to_string())),
            ValueKind::Integer => text.trim().parse().ok().map(Value::Int),
            ValueKind::Decimal => Decimal::from_str(text.trim()).ok().map(Value::Dec),
            ValueKind::Date => NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
                .ok()
                .map(Value::Date),
        }
    }

    /// Converts a literal into a value of this kind, or `None` on a type mismatch.
    pub fn coerce(self, literal: &Literal) -> Option<Value> {
        match (self, literal) {
            (ValueKind::String, Literal::Text(s)) => Some(Value::Str(s.clone())),
            (ValueKind::Integer, Literal::Int(i)) => Some(Value::Int(*i)),
            (ValueKind::Decimal, Literal::Int(i)) => Some(Value::Dec(Decimal::from(*i))),
            (ValueKind::Decimal, Literal::Dec(d)) => Some(Value::Dec(*d)),
            (ValueKind::Date, Literal::Text(s)) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(Value::Date),
            _ => None,
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::String => "string",
            ValueKind::Integer => "integer",
            ValueKind::Decimal => "decimal",
            ValueKind::Date => "date",
        })
    }
}

/// A literal as written in text: a number or a quoted string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Dec(Decimal),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Dec(d) => f.write_str(&format_decimal(*d)),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// Normalized decimal text that always re-reads as a decimal (`2` prints as `2.0`).
pub(crate) fn format_decimal(d: Decimal) -> String {
    let text = d.normalize().to_string();
    if text.contains('.') {
        text
    } else {
        format!("{text}.0")
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Literal::Int(i) => serializer.serialize_i64(*i),
            Literal::Dec(d) => serializer.serialize_f64(d.to_f64().unwrap_or(f64::NAN)),
            Literal::Text(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Literal::from_json(&json).ok_or_else(|| {
            serde::de::Error::custom(format!("expected a number or a string, found {json}"))
        })
    }
}

impl Literal {
    pub(crate) fn from_json(json: &serde_json::Value) -> Option<Literal> {
        match json {
            serde_json::Value::String(s) => Some(Literal::Text(s.clone())),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(Literal::Int(i))
                } else {
                    Decimal::from_str(&n.to_string())
                        .ok()
                        .or_else(|| n.as_f64().and_then(Decimal::from_f64))
                        .map(Literal::Dec)
                }
            }
            _ => None,
        }
    }
}

/// A typed attribute or measure value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Str(String),
    Int(i64),
    Dec(Decimal),
    Date(NaiveDate),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Str(_) => ValueKind::String,
            Value::Int(_) => ValueKind::Integer,
            Value::Dec(_) => ValueKind::Decimal,
            Value::Date(_) => ValueKind::Date,
        }
    }

    pub fn to_literal(&self) -> Literal {
        match self {
            Value::Str(s) => Literal::Text(s.clone()),
            Value::Int(i) => Literal::Int(*i),
            Value::Dec(d) => Literal::Dec(*d),
            Value::Date(d) => Literal::Text(d.format("%Y-%m-%d").to_string()),
        }
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Int(i) => Some(Decimal::from(*i)),
            Value::Dec(d) => Some(*d),
            _ => None,
        }
    }
}

/// Plain rendering, without quotes.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            Value::Dec(d) => write!(f, "{}", d.normalize()),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_literal().serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coercion_is_typed() {
        assert_eq!(
            ValueKind::Integer.coerce(&Literal::Int(2009)),
            Some(Value::Int(2009))
        );
        assert_eq!(
            ValueKind::Integer.coerce(&Literal::Text("abc".into())),
            None
        );
        assert_eq!(
            ValueKind::Decimal.coerce(&Literal::Int(3)),
            Some(Value::Dec(Decimal::from(3)))
        );
        assert!(ValueKind::Date
            .coerce(&Literal::Text("2009-02-30".into()))
            .is_none());
        assert_eq!(ValueKind::String.coerce(&Literal::Int(31)), None);
    }

    #[test]
    fn decimal_text_keeps_its_kind() {
        assert_eq!(Literal::Dec(Decimal::from(2)).to_string(), "2.0");
        assert_eq!(
            Literal::Dec(Decimal::from_str("2.50").unwrap()).to_string(),
            "2.5"
        );
        assert_eq!(Literal::Text("l'an".into()).to_string(), "'l''an'");
    }

    #[test]
    fn json_literals() {
        let lit: Literal = serde_json::from_str("2009").unwrap();
        assert_eq!(lit, Literal::Int(2009));
        let lit: Literal = serde_json::from_str("12.5").unwrap();
        assert_eq!(lit, Literal::Dec(Decimal::from_str("12.5").unwrap()));
        assert!(serde_json::from_str::<Literal>("true").is_err());
    }
}
