//! Character cursor shared by the anchor, predicate and script parsers.

use crate::value::Literal;
use rust_decimal::Decimal;
use std::str::FromStr;

/// A syntax error at a character offset (0-based) of the parsed text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at position {position}: {message}")]
pub struct SyntaxError {
    pub position: usize,
    pub message: String,
}

pub(crate) struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    pub(crate) fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            position: self.pos,
            message: message.into(),
        }
    }

    pub(crate) fn error_at(&self, position: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub(crate) fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    pub(crate) fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    pub(crate) fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    /// Skips whitespace, then consumes `c` if it is next.
    pub(crate) fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(match self.peek() {
                Some(found) => format!("expected '{c}', found '{found}'"),
                None => format!("expected '{c}', found end of input"),
            }))
        }
    }

    /// Consumes `word` when it appears next as a complete token.
    pub(crate) fn eat_keyword(&mut self, word: &str) -> bool {
        self.skip_ws();
        let n = word.chars().count();
        let matches = word
            .chars()
            .enumerate()
            .all(|(i, c)| self.peek_at(i) == Some(c));
        let boundary = !matches!(self.peek_at(n), Some(c) if c.is_ascii_alphanumeric() || c == '_');
        if matches && boundary {
            self.pos += n;
            true
        } else {
            false
        }
    }

    /// `[A-Za-z][A-Za-z0-9_]*`
    pub(crate) fn ident(&mut self) -> Result<String, SyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {}
            Some(c) => return Err(self.error(format!("expected a name, found '{c}'"))),
            None => return Err(self.error("expected a name, found end of input")),
        }
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                out.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(out)
    }

    /// `number | 'chars'` with `''` escaping a quote inside strings.
    pub(crate) fn literal(&mut self) -> Result<Literal, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('\'') => {
                self.pos += 1;
                let mut out = String::new();
                loop {
                    match self.bump() {
                        Some('\'') if self.peek() == Some('\'') => {
                            self.pos += 1;
                            out.push('\'');
                        }
                        Some('\'') => return Ok(Literal::Text(out)),
                        Some(c) => out.push(c),
                        None => return Err(self.error_at(start, "unterminated string literal")),
                    }
                }
            }
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let mut text = String::new();
                if c == '-' {
                    text.push('-');
                    self.pos += 1;
                }
                let digits_start = self.pos;
                while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                    text.push(self.bump().unwrap());
                }
                if self.pos == digits_start {
                    return Err(self.error("expected digits"));
                }
                if self.peek() == Some('.') {
                    text.push('.');
                    self.pos += 1;
                    let frac_start = self.pos;
                    while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                        text.push(self.bump().unwrap());
                    }
                    if self.pos == frac_start {
                        return Err(self.error("expected digits after '.'"));
                    }
                    Decimal::from_str(&text)
                        .map(Literal::Dec)
                        .map_err(|_| self.error_at(start, "decimal literal out of range"))
                } else {
                    text.parse::<i64>()
                        .map(Literal::Int)
                        .map_err(|_| self.error_at(start, "integer literal out of range"))
                }
            }
            Some(c) => Err(self.error(format!("expected a literal, found '{c}'"))),
            None => Err(self.error("expected a literal, found end of input")),
        }
    }

    pub(crate) fn expect_end(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => Err(self.error(format!("unexpected trailing '{c}'"))),
        }
    }
}

/// Whether `name` is a valid identifier (`[A-Za-z][A-Za-z0-9_]*`).
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
