//! Line-oriented operation scripts.
//!
//! ```text
//! DISPLAY(FVENTES, SUM(REMISE), DCLIENTS.HGEOFR, DTEMPS.HTEMPS)
//! DRILLDOWN(DCLIENTS, NDEPT)
//! ROTATE(DCLIENTS, DPRODUITS.HPROD)   # comment
//! ACCEPT(1)
//! ```

use crate::context::{MeasureRef, PredicateSpec};
use crate::lex::{Cursor, SyntaxError};
use crate::recommend::{AxisRef, OlapOperation};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    Operation(OlapOperation),
    /// Adopts the n-th (1-based) recommendation of the previous step.
    Accept(usize),
}

impl fmt::Display for ScriptStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptStep::Operation(op) => op.fmt(f),
            ScriptStep::Accept(n) => write!(f, "ACCEPT({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    /// Steps with their 1-based source line.
    pub steps: Vec<(usize, ScriptStep)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}")]
    Syntax {
        line: usize,
        #[source]
        source: SyntaxError,
    },
    #[error("first operation must be display")]
    MustStartWithDisplay,
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.trim().is_empty() {
                continue;
            }
            let step = parse_step(line).map_err(|source| ScriptError::Syntax {
                line: i + 1,
                source,
            })?;
            steps.push((i + 1, step));
        }
        match steps.first() {
            Some((_, ScriptStep::Operation(OlapOperation::Display { .. }))) => Ok(Script { steps }),
            _ => Err(ScriptError::MustStartWithDisplay),
        }
    }
}

/// Drops a `#` comment that is not inside a quoted literal.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

pub fn parse_step(line: &str) -> Result<ScriptStep, SyntaxError> {
    let mut cur = Cursor::new(line);
    let start = {
        cur.skip_ws();
        cur.position()
    };
    let keyword = cur.ident()?.to_ascii_uppercase();
    if keyword == "RESTRICT" {
        return parse_restrict(line, &mut cur);
    }
    cur.expect('(')?;
    let step = match keyword.as_str() {
        "DISPLAY" => {
            let fact = cur.ident()?;
            let mut measures = Vec::new();
            let mut axes = Vec::new();
            while cur.eat(',') {
                let first = cur.ident()?;
                if cur.eat('(') {
                    let agg = first
                        .parse()
                        .map_err(|_| cur.error(format!("unknown aggregate '{first}'")))?;
                    let m = cur.ident()?;
                    cur.expect(')')?;
                    if !axes.is_empty() {
                        return Err(cur.error("measures must precede axes"));
                    }
                    measures.push(MeasureRef::new(agg, m));
                } else {
                    cur.expect('.')?;
                    axes.push(AxisRef {
                        dim: first,
                        hier: cur.ident()?,
                    });
                }
            }
            OlapOperation::Display {
                fact,
                measures,
                axes,
            }
        }
        "DRILLDOWN" | "ROLLUP" => {
            let dim = cur.ident()?;
            cur.expect(',')?;
            let param = cur.ident()?;
            if keyword == "DRILLDOWN" {
                OlapOperation::Drilldown { dim, param }
            } else {
                OlapOperation::Rollup { dim, param }
            }
        }
        "ROTATE" => {
            let from = cur.ident()?;
            cur.expect(',')?;
            let to = cur.ident()?;
            cur.expect('.')?;
            OlapOperation::Rotate {
                from,
                to,
                hier: cur.ident()?,
            }
        }
        "ADDMEASURE" => {
            let at = cur.position();
            let agg_text = cur.ident()?;
            let agg = agg_text
                .parse()
                .map_err(|_| cur.error_at(at, format!("unknown aggregate '{agg_text}'")))?;
            cur.expect('(')?;
            let m = cur.ident()?;
            cur.expect(')')?;
            let position = if cur.eat(',') {
                Some(parse_index(&mut cur)?)
            } else {
                None
            };
            OlapOperation::AddMeasure {
                measure: MeasureRef::new(agg, m),
                position,
            }
        }
        "ACCEPT" => {
            let n = parse_index(&mut cur)?;
            if n == 0 {
                return Err(cur.error("recommendations are numbered from 1"));
            }
            cur.expect(')')?;
            cur.expect_end()?;
            return Ok(ScriptStep::Accept(n));
        }
        _ => return Err(cur.error_at(start, format!("unknown operation '{keyword}'"))),
    };
    cur.expect(')')?;
    cur.expect_end()?;
    Ok(ScriptStep::Operation(step))
}

fn parse_index(cur: &mut Cursor) -> Result<usize, SyntaxError> {
    cur.skip_ws();
    let at = cur.position();
    match cur.literal() {
        Ok(crate::value::Literal::Int(n)) if n >= 0 => Ok(n as usize),
        _ => Err(cur.error_at(at, "expected a non-negative integer")),
    }
}

/// `RESTRICT( predicate )`: the predicate spans up to the last `)`.
fn parse_restrict(line: &str, cur: &mut Cursor) -> Result<ScriptStep, SyntaxError> {
    cur.expect('(')?;
    let open = cur.position();
    let chars: Vec<char> = line.chars().collect();
    let close = chars
        .iter()
        .rposition(|&c| c == ')')
        .filter(|&i| i >= open)
        .ok_or_else(|| cur.error_at(chars.len(), "expected ')'"))?;
    if chars[close + 1..].iter().any(|c| !c.is_whitespace()) {
        return Err(cur.error_at(close + 1, "unexpected text after ')'"));
    }
    let inner: String = chars[open..close].iter().collect();
    let predicate = PredicateSpec::parse(&inner).map_err(|e| SyntaxError {
        position: e.position + open,
        message: e.message,
    })?;
    Ok(ScriptStep::Operation(OlapOperation::Restrict { predicate }))
}
