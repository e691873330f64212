//! Analysis contexts and the OLAP operations that derive one context from
//! another.
//!
//! Contexts are immutable values. Every operation returns a fresh context
//! carrying a new `CA<n>` identifier drawn from a [`ContextIds`] counter.

use crate::lex::{Cursor, SyntaxError};
use crate::schema::{Constellation, Dimension, Hierarchy};
use crate::value::{Literal, Value, ValueKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggFn {
    Sum,
    Avg,
    Min,
    Max,
    Count,
}

impl AggFn {
    pub const ALL: [AggFn; 5] = [AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max, AggFn::Count];

    pub fn as_str(self) -> &'static str {
        match self {
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
            AggFn::Count => "COUNT",
        }
    }
}

impl FromStr for AggFn {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggFn::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown aggregation function '{s}'"))
    }
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A displayed measure, `f(m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasureRef {
    pub agg: AggFn,
    pub measure: String,
}

impl MeasureRef {
    pub fn new(agg: AggFn, measure: impl Into<String>) -> Self {
        Self {
            agg,
            measure: measure.into(),
        }
    }

    pub fn sum(measure: impl Into<String>) -> Self {
        Self::new(AggFn::Sum, measure)
    }
}

impl fmt::Display for MeasureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.agg, self.measure)
    }
}

/// Parses `AGG(MEASURE)`.
impl FromStr for MeasureRef {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        let agg_text = cur.ident()?;
        let agg = agg_text
            .parse::<AggFn>()
            .map_err(|_| cur.error_at(0, format!("unknown aggregate '{agg_text}'")))?;
        cur.expect('(')?;
        let measure = cur.ident()?;
        cur.expect(')')?;
        cur.expect_end()?;
        Ok(MeasureRef::new(agg, measure))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(pub String);

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for ContextId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for ContextId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Per-session generator of `CA<n>` identifiers.
#[derive(Debug)]
pub struct ContextIds {
    next: AtomicU64,
}

impl Default for ContextIds {
    fn default() -> Self {
        Self::starting_at(1)
    }
}

impl ContextIds {
    pub fn starting_at(n: u64) -> Self {
        Self {
            next: AtomicU64::new(n),
        }
    }

    pub fn next_id(&self) -> ContextId {
        ContextId(format!("CA{}", self.next.fetch_add(1, Ordering::SeqCst)))
    }

    /// The number the next identifier will carry.
    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }

    pub fn reset_to(&self, n: u64) {
        self.next.store(n, Ordering::SeqCst);
    }
}

/// One analysis axis: a hierarchy of a dimension with the displayed levels,
/// listed coarse to fine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisSpec {
    pub dim: String,
    pub hier: String,
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weak: BTreeMap<String, Vec<String>>,
}

impl AxisSpec {
    pub fn finest(&self) -> &str {
        self.params.last().map(String::as_str).unwrap_or_default()
    }

    pub fn weak_of(&self, param: &str) -> &[String] {
        self.weak.get(param).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn displays(&self, attr: &str) -> bool {
        self.params.iter().any(|p| p == attr) || self.weak.values().flatten().any(|w| w == attr)
    }

    fn set_params(&mut self, hierarchy: &Hierarchy, params: Vec<String>) {
        self.weak = params
            .iter()
            .filter(|p| !hierarchy.weak_of(p).is_empty())
            .map(|p| (p.clone(), hierarchy.weak_of(p).to_vec()))
            .collect();
        self.params = params;
    }

    /// A fresh axis displaying `params` with their weak attributes.
    pub(crate) fn with_params(dim: &str, hierarchy: &Hierarchy, params: Vec<String>) -> Self {
        let mut axis = AxisSpec {
            dim: dim.to_string(),
            hier: hierarchy.name.clone(),
            params: Vec::new(),
            weak: BTreeMap::new(),
        };
        axis.set_params(hierarchy, params);
        axis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::In => "IN",
        }
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "=" => Comparator::Eq,
            "!=" | "<>" | "≠" => Comparator::Ne,
            "<" => Comparator::Lt,
            "<=" | "≤" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" | "≥" => Comparator::Ge,
            s if s.eq_ignore_ascii_case("IN") => Comparator::In,
            other => return Err(format!("unknown comparator '{other}'")),
        })
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Comparator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Comparator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a restriction predicate constrains: a fact measure (`FACT/MEASURE`)
/// or a dimension attribute (`DIM.ATTR`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateTarget {
    Measure { fact: String, measure: String },
    Attribute { dim: String, attr: String },
}

impl PredicateTarget {
    /// The property name (measure or attribute).
    pub fn property(&self) -> &str {
        match self {
            PredicateTarget::Measure { measure, .. } => measure,
            PredicateTarget::Attribute { attr, .. } => attr,
        }
    }
}

impl fmt::Display for PredicateTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateTarget::Measure { fact, measure } => write!(f, "{fact}/{measure}"),
            PredicateTarget::Attribute { dim, attr } => write!(f, "{dim}.{attr}"),
        }
    }
}

impl FromStr for PredicateTarget {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        let target = parse_target(&mut cur)?;
        cur.expect_end()?;
        Ok(target)
    }
}

impl Serialize for PredicateTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PredicateTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_target(cur: &mut Cursor) -> Result<PredicateTarget, SyntaxError> {
    let owner = cur.ident()?;
    if cur.eat('/') {
        Ok(PredicateTarget::Measure {
            fact: owner,
            measure: cur.ident()?,
        })
    } else if cur.eat('.') {
        Ok(PredicateTarget::Attribute {
            dim: owner,
            attr: cur.ident()?,
        })
    } else {
        Err(cur.error("expected '/' or '.' after the target owner"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand<V> {
    Single(V),
    Set(Vec<V>),
}

/// A restriction `target op operand`, generic over the literal representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate<V> {
    pub target: PredicateTarget,
    pub op: Comparator,
    pub operand: Operand<V>,
}

/// A predicate as written by a client, before typing against the schema.
pub type PredicateSpec = Predicate<Literal>;
/// A predicate whose operand has been typed against its target.
pub type RestrictionPredicate = Predicate<Value>;

impl PredicateSpec {
    /// Parses `DIM.ATTR = 'x'`, `FACT/M >= 10` or `DIM.ATTR IN (1, 2)`.
    pub fn parse(text: &str) -> Result<Self, SyntaxError> {
        let mut cur = Cursor::new(text);
        let target = parse_target(&mut cur)?;
        cur.skip_ws();
        let op_start = cur.position();
        let op = if cur.eat_keyword("IN") || cur.eat_keyword("in") {
            Comparator::In
        } else {
            let mut sym = String::new();
            while let Some(c) = cur.peek() {
                if "=<>!≠≤≥".contains(c) {
                    sym.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            sym.parse().map_err(|e: String| cur.error_at(op_start, e))?
        };
        let operand = if op == Comparator::In {
            cur.expect('(')?;
            let mut items = vec![cur.literal()?];
            while cur.eat(',') {
                items.push(cur.literal()?);
            }
            cur.expect(')')?;
            Operand::Set(items)
        } else {
            Operand::Single(cur.literal()?)
        };
        cur.expect_end()?;
        Ok(Predicate {
            target,
            op,
            operand,
        })
    }
}

impl<V> Predicate<V> {
    pub fn on_attribute(&self, dim: &str) -> bool {
        matches!(&self.target, PredicateTarget::Attribute { dim: d, .. } if d == dim)
    }
}

impl RestrictionPredicate {
    pub fn matches(&self, v: &Value) -> bool {
        match (&self.operand, self.op) {
            (Operand::Set(items), _) => items.contains(v),
            (Operand::Single(x), Comparator::Eq) => v == x,
            (Operand::Single(x), Comparator::Ne) => v != x,
            (Operand::Single(x), Comparator::Lt) => v < x,
            (Operand::Single(x), Comparator::Le) => v <= x,
            (Operand::Single(x), Comparator::Gt) => v > x,
            (Operand::Single(x), Comparator::Ge) => v >= x,
            (Operand::Single(x), Comparator::In) => v == x,
        }
    }

    pub fn to_spec(&self) -> PredicateSpec {
        Predicate {
            target: self.target.clone(),
            op: self.op,
            operand: match &self.operand {
                Operand::Single(v) => Operand::Single(v.to_literal()),
                Operand::Set(vs) => Operand::Set(vs.iter().map(Value::to_literal).collect()),
            },
        }
    }
}

impl fmt::Display for PredicateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.target, self.op)?;
        match &self.operand {
            Operand::Single(v) => write!(f, "{v}"),
            Operand::Set(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for RestrictionPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_spec().fmt(f)
    }
}

#[derive(Deserialize)]
struct PredicateDoc {
    target: PredicateTarget,
    op: Comparator,
    value: serde_json::Value,
}

impl Serialize for PredicateSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Predicate", 3)?;
        st.serialize_field("target", &self.target)?;
        st.serialize_field("op", &self.op)?;
        match &self.operand {
            Operand::Single(v) => st.serialize_field("value", v)?,
            Operand::Set(vs) => st.serialize_field("value", vs)?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for PredicateSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = PredicateDoc::deserialize(d)?;
        let lit = |j: &serde_json::Value| {
            Literal::from_json(j).ok_or_else(|| D::Error::custom(format!("invalid literal {j}")))
        };
        let operand = match (&doc.value, doc.op) {
            (serde_json::Value::Array(items), Comparator::In) => {
                Operand::Set(items.iter().map(lit).collect::<Result<_, _>>()?)
            }
            (_, Comparator::In) => return Err(D::Error::custom("IN expects an array value")),
            (v, _) => Operand::Single(lit(v)?),
        };
        Ok(Predicate {
            target: doc.target,
            op: doc.op,
            operand,
        })
    }
}

impl Serialize for RestrictionPredicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

/// The current state of an analysis: subject, axes and restrictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalysisContext {
    pub(crate) id: ContextId,
    pub(crate) fact: String,
    pub(crate) measures: Vec<MeasureRef>,
    pub(crate) axes: Vec<AxisSpec>,
    pub(crate) restrictions: BTreeSet<RestrictionPredicate>,
    /// Index of the most recently modified axis.
    #[serde(skip)]
    pub(crate) focus: usize,
}

impl AnalysisContext {
    pub fn id(&self) -> &ContextId {
        &self.id
    }

    pub fn fact(&self) -> &str {
        &self.fact
    }

    pub fn measures(&self) -> &[MeasureRef] {
        &self.measures
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn axis(&self, dim: &str) -> Option<&AxisSpec> {
        self.axes.iter().find(|a| a.dim == dim)
    }

    pub fn restrictions(&self) -> &BTreeSet<RestrictionPredicate> {
        &self.restrictions
    }

    pub fn focus_axis(&self) -> usize {
        self.focus.min(self.axes.len().saturating_sub(1))
    }

    /// Same content, ignoring the identifier.
    pub fn same_content(&self, other: &AnalysisContext) -> bool {
        self.fact == other.fact
            && self.measures == other.measures
            && self.axes == other.axes
            && self.restrictions == other.restrictions
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("context serializes")
    }

    fn axis_index(&self, dim: &str) -> Result<usize, ContextError> {
        self.axes
            .iter()
            .position(|a| a.dim == dim)
            .ok_or_else(|| ContextError::DimensionNotOnAxis(dim.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("unknown fact '{0}'")]
    UnknownFact(String),
    #[error("unknown measure '{0}'")]
    UnknownMeasure(String),
    #[error("unknown dimension '{0}'")]
    UnknownDimension(String),
    #[error("unknown hierarchy '{hier}' in dimension '{dim}'")]
    UnknownHierarchy { dim: String, hier: String },
    #[error("unknown attribute '{attr}' in dimension '{dim}'")]
    UnknownAttribute { dim: String, attr: String },
    #[error("dimension '{dim}' is not in the star of fact '{fact}'")]
    NotInStar { fact: String, dim: String },
    #[error("dimension '{0}' is already displayed on an axis")]
    DuplicateAxis(String),
    #[error("a context shows one or two axes, got {0}")]
    AxisCount(usize),
    #[error("a context displays at least one measure")]
    NoMeasure,
    #[error("duplicate measure {0}")]
    DuplicateMeasure(MeasureRef),
    #[error("measure position {position} out of range (0..={len})")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("dimension '{0}' is not on an axis")]
    DimensionNotOnAxis(String),
    #[error("parameter '{param}' not in hierarchy '{hier}'")]
    ParamNotInHierarchy { param: String, hier: String },
    #[error("parameter '{param}' is not finer than the finest displayed level '{finest}'")]
    NotFiner { param: String, finest: String },
    #[error("parameter '{param}' is not displayed on the '{dim}' axis")]
    ParamNotDisplayed { dim: String, param: String },
    #[error("displayed levels {0:?} do not follow the hierarchy order")]
    LevelOrder(Vec<String>),
    #[error("type mismatch: {target} expects {expected}, got {found}")]
    TypeMismatch {
        target: String,
        expected: ValueKind,
        found: String,
    },
    #[error("comparator {op} does not accept this operand")]
    OperandShape { op: Comparator },
    #[error("predicate target {0} is not the subject fact or one of its star dimensions")]
    UnknownTarget(String),
}

/// Applies OLAP operations against a schema, minting identifiers from a
/// per-session counter.
#[derive(Clone, Copy)]
pub struct Navigator<'a> {
    schema: &'a Constellation,
    ids: &'a ContextIds,
}

impl<'a> Navigator<'a> {
    pub fn new(schema: &'a Constellation, ids: &'a ContextIds) -> Self {
        Self { schema, ids }
    }

    pub fn schema(&self) -> &'a Constellation {
        self.schema
    }

    pub fn ids(&self) -> &'a ContextIds {
        self.ids
    }

    fn dimension(&self, name: &str) -> Result<&'a Dimension, ContextError> {
        self.schema
            .dimension(name)
            .ok_or_else(|| ContextError::UnknownDimension(name.to_string()))
    }

    fn hierarchy(&self, dim: &str, hier: &str) -> Result<&'a Hierarchy, ContextError> {
        self.dimension(dim)?
            .hierarchy(hier)
            .ok_or_else(|| ContextError::UnknownHierarchy {
                dim: dim.to_string(),
                hier: hier.to_string(),
            })
    }

    fn fresh(&self, mut ctx: AnalysisContext) -> AnalysisContext {
        ctx.id = self.ids.next_id();
        ctx
    }

    /// A new context showing the coarsest level of each axis hierarchy.
    pub fn display(
        &self,
        fact: &str,
        measures: &[MeasureRef],
        axes: &[(String, String)],
    ) -> Result<AnalysisContext, ContextError> {
        let f = self
            .schema
            .fact(fact)
            .ok_or_else(|| ContextError::UnknownFact(fact.to_string()))?;
        if !(1..=2).contains(&axes.len()) {
            return Err(ContextError::AxisCount(axes.len()));
        }
        if measures.is_empty() {
            return Err(ContextError::NoMeasure);
        }
        let mut shown = Vec::new();
        for m in measures {
            if f.measure(&m.measure).is_none() {
                return Err(ContextError::UnknownMeasure(m.measure.clone()));
            }
            if shown.contains(m) {
                return Err(ContextError::DuplicateMeasure(m.clone()));
            }
            shown.push(m.clone());
        }
        let mut built: Vec<AxisSpec> = Vec::new();
        for (dim, hier) in axes {
            let h = self.hierarchy(dim, hier)?;
            if !self.schema.in_star(fact, dim) {
                return Err(ContextError::NotInStar {
                    fact: fact.to_string(),
                    dim: dim.clone(),
                });
            }
            if built.iter().any(|a| &a.dim == dim) {
                return Err(ContextError::DuplicateAxis(dim.clone()));
            }
            built.push(AxisSpec::with_params(
                dim,
                h,
                vec![h.coarsest().to_string()],
            ));
        }
        Ok(self.fresh(AnalysisContext {
            id: ContextId(String::new()),
            fact: fact.to_string(),
            measures: shown,
            focus: built.len() - 1,
            axes: built,
            restrictions: BTreeSet::new(),
        }))
    }

    /// Adds one strictly finer level (and its weak attributes) to an axis.
    pub fn drilldown(
        &self,
        ctx: &AnalysisContext,
        dim: &str,
        param: &str,
    ) -> Result<AnalysisContext, ContextError> {
        let idx = ctx.axis_index(dim)?;
        let axis = &ctx.axes[idx];
        let h = self.hierarchy(dim, &axis.hier)?;
        if !h.contains(param) {
            return Err(ContextError::ParamNotInHierarchy {
                param: param.to_string(),
                hier: axis.hier.clone(),
            });
        }
        if !h.precedes(param, axis.finest()) {
            return Err(ContextError::NotFiner {
                param: param.to_string(),
                finest: axis.finest().to_string(),
            });
        }
        let mut next = ctx.clone();
        let mut params = axis.params.clone();
        params.push(param.to_string());
        next.axes[idx].set_params(h, params);
        next.focus = idx;
        Ok(self.fresh(next))
    }

    /// Removes every displayed level strictly finer than `param`.
    pub fn rollup(
        &self,
        ctx: &AnalysisContext,
        dim: &str,
        param: &str,
    ) -> Result<AnalysisContext, ContextError> {
        let idx = ctx.axis_index(dim)?;
        let axis = &ctx.axes[idx];
        let h = self.hierarchy(dim, &axis.hier)?;
        let displayed = axis.params.iter().any(|p| p == param);
        if !displayed && h.coarsest() != param {
            return Err(ContextError::ParamNotDisplayed {
                dim: dim.to_string(),
                param: param.to_string(),
            });
        }
        let mut params: Vec<String> = axis
            .params
            .iter()
            .filter(|p| !h.precedes(p, param))
            .cloned()
            .collect();
        if !displayed {
            params.push(param.to_string());
        }
        let mut next = ctx.clone();
        next.axes[idx].set_params(h, params);
        next.focus = idx;
        Ok(self.fresh(next))
    }

    /// Replaces the `from` axis by a fresh axis on `(to, hier)`. Restrictions
    /// on the outgoing dimension are dropped.
    pub fn rotate(
        &self,
        ctx: &AnalysisContext,
        from: &str,
        to: &str,
        hier: &str,
    ) -> Result<AnalysisContext, ContextError> {
        let idx = ctx.axis_index(from)?;
        let h = self.hierarchy(to, hier)?;
        if !self.schema.in_star(&ctx.fact, to) {
            return Err(ContextError::NotInStar {
                fact: ctx.fact.clone(),
                dim: to.to_string(),
            });
        }
        if ctx
            .axes
            .iter()
            .enumerate()
            .any(|(i, a)| i != idx && a.dim == to)
        {
            return Err(ContextError::DuplicateAxis(to.to_string()));
        }
        let mut next = ctx.clone();
        next.axes[idx] = AxisSpec::with_params(to, h, vec![h.coarsest().to_string()]);
        next.restrictions.retain(|p| !p.on_attribute(from));
        next.focus = idx;
        Ok(self.fresh(next))
    }

    pub fn add_measure(
        &self,
        ctx: &AnalysisContext,
        measure: MeasureRef,
        position: usize,
    ) -> Result<AnalysisContext, ContextError> {
        let fact = self
            .schema
            .fact(&ctx.fact)
            .ok_or_else(|| ContextError::UnknownFact(ctx.fact.clone()))?;
        if fact.measure(&measure.measure).is_none() {
            return Err(ContextError::UnknownMeasure(measure.measure));
        }
        if ctx.measures.contains(&measure) {
            return Err(ContextError::DuplicateMeasure(measure));
        }
        if position > ctx.measures.len() {
            return Err(ContextError::PositionOutOfRange {
                position,
                len: ctx.measures.len(),
            });
        }
        let mut next = ctx.clone();
        next.measures.insert(position, measure);
        Ok(self.fresh(next))
    }

    /// Adds a restriction; re-adding an identical predicate leaves the set unchanged.
    pub fn restrict(
        &self,
        ctx: &AnalysisContext,
        predicate: &PredicateSpec,
    ) -> Result<AnalysisContext, ContextError> {
        let typed = self.type_predicate(&ctx.fact, predicate)?;
        let mut next = ctx.clone();
        next.restrictions.insert(typed);
        Ok(self.fresh(next))
    }

    /// Types `predicate` against its target; the target must be the fact
    /// itself or one of its star dimensions.
    pub fn type_predicate(
        &self,
        fact: &str,
        predicate: &PredicateSpec,
    ) -> Result<RestrictionPredicate, ContextError> {
        type_predicate(self.schema, Some(fact), predicate)
    }

    /// Checks every context invariant against the schema.
    pub fn check(&self, ctx: &AnalysisContext) -> Result<(), ContextError> {
        check_context(self.schema, ctx)
    }
}

/// Types a predicate against the schema. With `fact` given, attribute
/// targets must belong to its star and measure targets to the fact itself.
pub fn type_predicate(
    schema: &Constellation,
    fact: Option<&str>,
    predicate: &PredicateSpec,
) -> Result<RestrictionPredicate, ContextError> {
    let kind = match &predicate.target {
        PredicateTarget::Measure { fact: f, measure } => {
            let fd = schema
                .fact(f)
                .ok_or_else(|| ContextError::UnknownFact(f.clone()))?;
            if fact.is_some_and(|subject| subject != f) {
                return Err(ContextError::UnknownTarget(predicate.target.to_string()));
            }
            fd.measure(measure)
                .ok_or_else(|| ContextError::UnknownMeasure(measure.clone()))?;
            ValueKind::Decimal
        }
        PredicateTarget::Attribute { dim, attr } => {
            let d = schema
                .dimension(dim)
                .ok_or_else(|| ContextError::UnknownDimension(dim.clone()))?;
            if let Some(f) = fact {
                if !schema.in_star(f, dim) {
                    return Err(ContextError::UnknownTarget(predicate.target.to_string()));
                }
            }
            d.attribute(attr)
                .ok_or_else(|| ContextError::UnknownAttribute {
                    dim: dim.clone(),
                    attr: attr.clone(),
                })?
                .kind
        }
    };
    let coerce = |lit: &Literal| {
        kind.coerce(lit).ok_or_else(|| ContextError::TypeMismatch {
            target: predicate.target.to_string(),
            expected: kind,
            found: lit.to_string(),
        })
    };
    let operand = match (&predicate.operand, predicate.op) {
        (Operand::Set(items), Comparator::In) if !items.is_empty() => {
            let mut typed = items.iter().map(coerce).collect::<Result<Vec<_>, _>>()?;
            typed.sort();
            typed.dedup();
            Operand::Set(typed)
        }
        (Operand::Single(lit), op) if op != Comparator::In => Operand::Single(coerce(lit)?),
        (_, op) => return Err(ContextError::OperandShape { op }),
    };
    Ok(Predicate {
        target: predicate.target.clone(),
        op: predicate.op,
        operand,
    })
}

pub fn check_context(schema: &Constellation, ctx: &AnalysisContext) -> Result<(), ContextError> {
    let fact = schema
        .fact(&ctx.fact)
        .ok_or_else(|| ContextError::UnknownFact(ctx.fact.clone()))?;
    if ctx.measures.is_empty() {
        return Err(ContextError::NoMeasure);
    }
    let mut seen = BTreeSet::new();
    for m in &ctx.measures {
        if fact.measure(&m.measure).is_none() {
            return Err(ContextError::UnknownMeasure(m.measure.clone()));
        }
        if !seen.insert(m) {
            return Err(ContextError::DuplicateMeasure(m.clone()));
        }
    }
    if !(1..=2).contains(&ctx.axes.len()) {
        return Err(ContextError::AxisCount(ctx.axes.len()));
    }
    let mut dims = BTreeSet::new();
    for axis in &ctx.axes {
        if !schema.in_star(&ctx.fact, &axis.dim) {
            return Err(ContextError::NotInStar {
                fact: ctx.fact.clone(),
                dim: axis.dim.clone(),
            });
        }
        if !dims.insert(axis.dim.as_str()) {
            return Err(ContextError::DuplicateAxis(axis.dim.clone()));
        }
        let h = schema
            .dimension(&axis.dim)
            .and_then(|d| d.hierarchy(&axis.hier))
            .ok_or_else(|| ContextError::UnknownHierarchy {
                dim: axis.dim.clone(),
                hier: axis.hier.clone(),
            })?;
        if axis.params.is_empty() {
            return Err(ContextError::LevelOrder(Vec::new()));
        }
        for p in &axis.params {
            if !h.contains(p) {
                return Err(ContextError::ParamNotInHierarchy {
                    param: p.clone(),
                    hier: h.name.clone(),
                });
            }
        }
        if !axis.params.windows(2).all(|w| h.precedes(&w[1], &w[0])) {
            return Err(ContextError::LevelOrder(axis.params.clone()));
        }
        for (p, ws) in &axis.weak {
            if !axis.params.contains(p) || !ws.iter().all(|w| h.weak_of(p).contains(w)) {
                return Err(ContextError::LevelOrder(axis.params.clone()));
            }
        }
    }
    for p in &ctx.restrictions {
        let retyped = type_predicate(schema, Some(&ctx.fact), &p.to_spec())?;
        if &retyped != p {
            return Err(ContextError::UnknownTarget(p.target.to_string()));
        }
    }
    Ok(())
}
