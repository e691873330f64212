//! Anchor expressions locating an annotation on a schema concept (global) or
//! on an element of one analysis context (local).
//!
//! ```text
//! anchor  := "(" part "," part "," part ")"
//! part    := LAMBDA | subject | dimref
//! subject := [ ctxid "." ] NAME [ "/" measure [ "=" literal ] ]
//! measure := NAME | AGG "(" NAME ")"
//! dimref  := NAME [ "." NAME ( "/" NAME [ "=" literal ] )* ]
//! LAMBDA  := "λ" | "lambda"
//! ```

use crate::context::{AggFn, ContextId};
use crate::cube::MultidimensionalTable;
use crate::lex::{Cursor, SyntaxError};
use crate::schema::{Constellation, Dimension, Fact, Hierarchy};
use crate::tree::{ContextTree, Label, NodeKind};
use crate::value::{Literal, Value};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnchorMeasure {
    Bare(String),
    Aggregated(AggFn, String),
}

impl AnchorMeasure {
    pub fn name(&self) -> &str {
        match self {
            AnchorMeasure::Bare(m) | AnchorMeasure::Aggregated(_, m) => m,
        }
    }
}

impl fmt::Display for AnchorMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorMeasure::Bare(m) => f.write_str(m),
            AnchorMeasure::Aggregated(agg, m) => write!(f, "{agg}({m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubjectRef {
    pub context: Option<ContextId>,
    pub fact: String,
    pub measure: Option<AnchorMeasure>,
    pub value: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Level {
    pub param: String,
    pub position: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimRef {
    pub dimension: String,
    pub hierarchy: Option<String>,
    pub levels: Vec<Level>,
}

/// A parsed anchor. Names keep the spelling they were written with.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Anchor {
    pub subject: Option<SubjectRef>,
    pub dim1: Option<DimRef>,
    pub dim2: Option<DimRef>,
}

impl Anchor {
    pub fn parse(text: &str) -> Result<Self, SyntaxError> {
        let mut cur = Cursor::new(text);
        cur.expect('(')?;
        let subject = if eat_lambda(&mut cur) {
            None
        } else {
            Some(parse_subject(&mut cur)?)
        };
        let mut dims = [None, None];
        for slot in &mut dims {
            cur.expect(',')?;
            if !eat_lambda(&mut cur) {
                *slot = Some(parse_dimref(&mut cur)?);
            }
        }
        cur.expect(')')?;
        cur.expect_end()?;
        let [dim1, dim2] = dims;
        if subject.is_none() && dim1.is_none() && dim2.is_none() {
            return Err(cur.error_at(0, "empty anchor"));
        }
        Ok(Anchor {
            subject,
            dim1,
            dim2,
        })
    }

    /// Local anchors name the context they were written on.
    pub fn context(&self) -> Option<&ContextId> {
        self.subject.as_ref().and_then(|s| s.context.as_ref())
    }

    pub fn is_local(&self) -> bool {
        self.context().is_some()
    }

    pub fn dims(&self) -> impl Iterator<Item = &DimRef> {
        self.dim1.iter().chain(self.dim2.iter())
    }
}

fn eat_lambda(cur: &mut Cursor) -> bool {
    cur.eat('λ') || cur.eat_keyword("lambda")
}

fn parse_subject(cur: &mut Cursor) -> Result<SubjectRef, SyntaxError> {
    let first = cur.ident()?;
    let (context, fact) = if cur.eat('.') {
        (Some(ContextId(first)), cur.ident()?)
    } else {
        (None, first)
    };
    let mut subject = SubjectRef {
        context,
        fact,
        measure: None,
        value: None,
    };
    if cur.eat('/') {
        let start = cur.position();
        let name = cur.ident()?;
        subject.measure = Some(if cur.eat('(') {
            let agg = name
                .parse::<AggFn>()
                .map_err(|_| cur.error_at(start, format!("unknown aggregate '{name}'")))?;
            let m = cur.ident()?;
            cur.expect(')')?;
            AnchorMeasure::Aggregated(agg, m)
        } else {
            AnchorMeasure::Bare(name)
        });
        if cur.eat('=') {
            subject.value = Some(cur.literal()?);
        }
    }
    Ok(subject)
}

fn parse_dimref(cur: &mut Cursor) -> Result<DimRef, SyntaxError> {
    let mut d = DimRef {
        dimension: cur.ident()?,
        hierarchy: None,
        levels: Vec::new(),
    };
    if cur.eat('.') {
        d.hierarchy = Some(cur.ident()?);
        while cur.eat('/') {
            let param = cur.ident()?;
            let position = if cur.eat('=') {
                Some(cur.literal()?)
            } else {
                None
            };
            d.levels.push(Level { param, position });
        }
    }
    Ok(d)
}

/// Canonical text: `(S, D1, D2)` with `λ` for empty parts.
impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        match &self.subject {
            Some(s) => write!(f, "{s}")?,
            None => f.write_str("λ")?,
        }
        for d in [&self.dim1, &self.dim2] {
            match d {
                Some(d) => write!(f, ", {d}")?,
                None => f.write_str(", λ")?,
            }
        }
        f.write_str(")")
    }
}

impl fmt::Display for SubjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = &self.context {
            write!(f, "{c}.")?;
        }
        f.write_str(&self.fact)?;
        if let Some(m) = &self.measure {
            write!(f, "/{m}")?;
            if let Some(v) = &self.value {
                write!(f, "={v}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for DimRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dimension)?;
        if let Some(h) = &self.hierarchy {
            write!(f, ".{h}")?;
            for l in &self.levels {
                write!(f, "/{}", l.param)?;
                if let Some(p) = &l.position {
                    write!(f, "={p}")?;
                }
            }
        }
        Ok(())
    }
}

impl serde::Serialize for Anchor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Anchor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = <String as serde::Deserialize>::deserialize(d)?;
        Anchor::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnchorError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },
    #[error("dimension {dimension} is not linked to fact {fact}")]
    NotInStar { fact: String, dimension: String },
    #[error("levels given without a hierarchy on {0}")]
    LevelsWithoutHierarchy(String),
    #[error("value {value} does not fit {target}")]
    TypeMismatch { target: String, value: String },
}

/// A schema concept an anchor designates, in schema spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Concept {
    Fact(String),
    Measure {
        fact: String,
        agg: Option<AggFn>,
        measure: String,
    },
    Dimension(String),
    Hierarchy {
        dim: String,
        hier: String,
    },
    Parameter {
        dim: String,
        hier: String,
        param: String,
    },
}

/// An anchor checked against a schema, with names in schema spelling.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAnchor {
    pub context: Option<ContextId>,
    pub concepts: Vec<Concept>,
    /// Required measure cell value, with the measure it applies to.
    pub value: Option<(Concept, Value)>,
    /// Header positions per `(dimension, parameter)`.
    pub positions: Vec<(String, String, Value)>,
}

fn find_ci<'a, T>(items: &'a [T], name: &str, key: impl Fn(&T) -> &str) -> Option<&'a T> {
    items
        .iter()
        .find(|t| key(t) == name)
        .or_else(|| items.iter().find(|t| key(t).eq_ignore_ascii_case(name)))
}

fn unknown(kind: &'static str, name: &str) -> AnchorError {
    AnchorError::UnknownName {
        kind,
        name: name.to_string(),
    }
}

impl Anchor {
    /// Resolves names against the schema. Lookup is exact first, then
    /// ASCII case-insensitive.
    pub fn resolve(&self, schema: &Constellation) -> Result<ResolvedAnchor, AnchorError> {
        let mut out = ResolvedAnchor {
            context: self.context().cloned(),
            concepts: Vec::new(),
            value: None,
            positions: Vec::new(),
        };
        let mut fact: Option<&Fact> = None;
        if let Some(s) = &self.subject {
            let f = find_ci(&schema.facts, &s.fact, |f| &f.name)
                .ok_or_else(|| unknown("fact", &s.fact))?;
            out.concepts.push(Concept::Fact(f.name.clone()));
            if let Some(m) = &s.measure {
                let measure = find_ci(&f.measures, m.name(), |m| &m.name)
                    .ok_or_else(|| unknown("measure", m.name()))?;
                let concept = Concept::Measure {
                    fact: f.name.clone(),
                    agg: match m {
                        AnchorMeasure::Bare(_) => None,
                        AnchorMeasure::Aggregated(a, _) => Some(*a),
                    },
                    measure: measure.name.clone(),
                };
                out.concepts.push(concept.clone());
                if let Some(v) = &s.value {
                    let value =
                        measure
                            .kind
                            .coerce(v)
                            .ok_or_else(|| AnchorError::TypeMismatch {
                                target: format!("{}/{}", f.name, measure.name),
                                value: v.to_string(),
                            })?;
                    out.value = Some((concept, value));
                }
            }
            fact = Some(f);
        }
        for d in self.dims() {
            let dim: &Dimension = find_ci(&schema.dimensions, &d.dimension, |d| &d.name)
                .ok_or_else(|| unknown("dimension", &d.dimension))?;
            if let Some(f) = fact {
                if !schema.in_star(&f.name, &dim.name) {
                    return Err(AnchorError::NotInStar {
                        fact: f.name.clone(),
                        dimension: dim.name.clone(),
                    });
                }
            }
            out.concepts.push(Concept::Dimension(dim.name.clone()));
            let Some(h) = &d.hierarchy else {
                if !d.levels.is_empty() {
                    return Err(AnchorError::LevelsWithoutHierarchy(dim.name.clone()));
                }
                continue;
            };
            let hier: &Hierarchy =
                find_ci(&dim.hierarchies, h, |h| &h.name).ok_or_else(|| unknown("hierarchy", h))?;
            out.concepts.push(Concept::Hierarchy {
                dim: dim.name.clone(),
                hier: hier.name.clone(),
            });
            for l in &d.levels {
                let param = find_ci(&hier.params, &l.param, |p| p)
                    .ok_or_else(|| unknown("parameter", &l.param))?;
                out.concepts.push(Concept::Parameter {
                    dim: dim.name.clone(),
                    hier: hier.name.clone(),
                    param: param.clone(),
                });
                if let Some(pos) = &l.position {
                    let kind = dim.attribute(param).expect("validated schema").kind;
                    let value = kind.coerce(pos).ok_or_else(|| AnchorError::TypeMismatch {
                        target: format!("{}.{}", dim.name, param),
                        value: pos.to_string(),
                    })?;
                    out.positions.push((dim.name.clone(), param.clone(), value));
                }
            }
        }
        Ok(out)
    }
}

/// Parses and resolves in one step.
pub fn parse_anchor(
    schema: &Constellation,
    text: &str,
) -> Result<(Anchor, ResolvedAnchor), AnchorError> {
    let anchor = Anchor::parse(text)?;
    let resolved = anchor.resolve(schema)?;
    Ok((anchor, resolved))
}

impl Concept {
    /// Whether the concept's node appears in the tree, under the expected
    /// ancestors.
    pub fn appears_in(&self, tree: &ContextTree) -> bool {
        let mut found = false;
        tree.walk(|label, ancestors| {
            if found {
                return;
            }
            let under = |kind: NodeKind, name: &str| {
                ancestors.iter().any(|a| a.kind == kind && a.name == name)
            };
            found = match self {
                Concept::Fact(f) => *label == Label::new(NodeKind::Fact, f.as_str()),
                Concept::Measure { fact, agg, measure } => {
                    label.kind == NodeKind::Measure
                        && under(NodeKind::Fact, fact)
                        && measure_label_matches(&label.name, *agg, measure)
                }
                Concept::Dimension(d) => *label == Label::new(NodeKind::Dimension, d.as_str()),
                Concept::Hierarchy { dim, hier } => {
                    *label == Label::new(NodeKind::Hierarchy, hier.as_str())
                        && under(NodeKind::Dimension, dim)
                }
                Concept::Parameter { dim, hier, param } => {
                    *label == Label::new(NodeKind::Parameter, param.as_str())
                        && under(NodeKind::Dimension, dim)
                        && under(NodeKind::Hierarchy, hier)
                }
            };
        });
        found
    }
}

fn measure_label_matches(label: &str, agg: Option<AggFn>, measure: &str) -> bool {
    match agg {
        Some(a) => label == format!("{a}({measure})"),
        None => AggFn::ALL
            .iter()
            .any(|a| label == format!("{a}({measure})")),
    }
}

impl ResolvedAnchor {
    /// Whether a global anchor applies to a context with this tree (and,
    /// for anchors carrying a measure value, this evaluated table).
    pub fn applies_to_tree(
        &self,
        tree: &ContextTree,
        table: Option<&MultidimensionalTable>,
    ) -> bool {
        if !self.concepts.iter().all(|c| c.appears_in(tree)) {
            return false;
        }
        match &self.value {
            None => true,
            Some((Concept::Measure { agg, measure, .. }, value)) => {
                let Some(table) = table else { return false };
                let Some(target) = value.as_decimal() else {
                    return false;
                };
                table.cells.iter().any(|c| {
                    let m = &table.measures[c.measure];
                    m.measure == *measure && agg.is_none_or(|a| a == m.agg) && c.value == target
                })
            }
            Some(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextIds, MeasureRef, Navigator};
    use crate::fixtures::sales_schema;
    use crate::tree::to_tree;

    const A1: &str = "(FVENTES/Remise, λ , λ)";
    const A2: &str =
        "(CA2.FVENTES/Remise, DCLIENTS.HGEOFR/Region='M-Pyrenees', DTEMPS.HTEMPS/Annee=2009)";
    const A3: &str = "(λ , DPRODUITS, λ)";
    const A4: &str = "(λ , DCLIENTS.HGEOUS/Etat, λ)";

    #[test]
    fn reference_anchors_print_canonically() {
        let cases = [
            (A1, "(FVENTES/Remise, λ, λ)"),
            (
                A2,
                "(CA2.FVENTES/Remise, DCLIENTS.HGEOFR/Region='M-Pyrenees', DTEMPS.HTEMPS/Annee=2009)",
            ),
            (A3, "(λ, DPRODUITS, λ)"),
            (A4, "(λ, DCLIENTS.HGEOUS/Etat, λ)"),
        ];
        for (input, canonical) in cases {
            let a = Anchor::parse(input).unwrap();
            assert_eq!(a.to_string(), canonical);
            assert_eq!(Anchor::parse(canonical).unwrap(), a);
        }
        let a2 = Anchor::parse(A2).unwrap();
        assert!(a2.is_local());
        assert_eq!(a2.context().unwrap(), "CA2");
        assert!(!Anchor::parse(A1).unwrap().is_local());
    }

    #[test]
    fn empty_anchor_is_rejected() {
        let err = Anchor::parse("(λ, λ, λ)").unwrap_err();
        assert_eq!(err.message, "empty anchor");
        assert!(Anchor::parse("(lambda, lambda, lambda)").is_err());
    }

    #[test]
    fn errors_carry_positions() {
        let err = Anchor::parse("(FVENTES/, λ, λ)").unwrap_err();
        assert_eq!(err.position, 9);
        let err = Anchor::parse("(λ, DPRODUITS λ)").unwrap_err();
        assert_eq!(err.position, 14);
        let err = Anchor::parse("(FVENTES/FOO(REMISE), λ, λ)").unwrap_err();
        assert_eq!(err.position, 9);
    }

    #[test]
    fn aggregated_measures_and_lambda_alias() {
        let a = Anchor::parse("( FVENTES / SUM ( REMISE ) = 12.50 , lambda, λ )").unwrap();
        assert_eq!(a.to_string(), "(FVENTES/SUM(REMISE)=12.5, λ, λ)");
    }

    #[test]
    fn resolution_uses_schema_spelling() {
        let schema = sales_schema();
        let (_, r) = parse_anchor(&schema, A2).unwrap();
        assert!(r.concepts.contains(&Concept::Parameter {
            dim: "DCLIENTS".into(),
            hier: "HGEOFR".into(),
            param: "REGION".into(),
        }));
        assert_eq!(
            r.positions,
            vec![
                (
                    "DCLIENTS".into(),
                    "REGION".into(),
                    Value::Str("M-Pyrenees".into())
                ),
                ("DTEMPS".into(), "ANNEE".into(), Value::Int(2009)),
            ]
        );
        assert!(matches!(
            parse_anchor(&schema, "(λ, DCLIENTS.HGEOUS/NDEPT, λ)"),
            Err(AnchorError::UnknownName {
                kind: "parameter",
                ..
            })
        ));
        assert!(matches!(
            parse_anchor(&schema, "(λ, DTEMPS.HTEMPS/ANNEE='x', λ)"),
            Err(AnchorError::TypeMismatch { .. })
        ));
        assert!(matches!(
            parse_anchor(&schema, "(FVENTES/MARGE, λ, λ)"),
            Err(AnchorError::UnknownName {
                kind: "measure",
                ..
            })
        ));
    }

    #[test]
    fn global_concepts_follow_the_tree() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ca1 = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[
                    ("DCLIENTS".into(), "HGEOFR".into()),
                    ("DTEMPS".into(), "HTEMPS".into()),
                ],
            )
            .unwrap();
        let tree = to_tree(&ca1);
        let applies = |text: &str| {
            parse_anchor(&schema, text)
                .unwrap()
                .1
                .applies_to_tree(&tree, None)
        };
        assert!(applies(A1));
        assert!(applies("(FVENTES/SUM(REMISE), λ, λ)"));
        assert!(!applies("(FVENTES/AVG(REMISE), λ, λ)"));
        assert!(!applies(A3));
        assert!(!applies(A4));
        assert!(applies("(λ, DCLIENTS.HGEOFR/REGION, λ)"));
        assert!(!applies("(λ, DCLIENTS.HGEOFR/NDEPT, λ)"));
        assert!(!applies("(FVENTES/REMISE=3.5, λ, λ)"));
    }
}
