//! User preferences: an order over structure elements or value predicates,
//! scoped by a preference context, and coverage of that context by an
//! analysis context.

use crate::chain::describe;
use crate::context::{
    type_predicate, AnalysisContext, ContextError, PredicateSpec, RestrictionPredicate,
};
use crate::ids::natural_cmp;
use crate::lex::SyntaxError;
use crate::schema::Constellation;
use crate::tree::{build_tree, to_tree, AxisView, ContextTree};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceKind {
    Structure,
    Value,
}

/// A structure element named in a preference order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureRef {
    Fact(String),
    Dimension(String),
    Hierarchy { dim: String, hier: String },
    Measure { fact: String, measure: String },
    Parameter { dim: String, param: String },
}

impl fmt::Display for StructureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureRef::Fact(n) | StructureRef::Dimension(n) => f.write_str(n),
            StructureRef::Hierarchy { dim, hier } => write!(f, "{dim}.{hier}"),
            StructureRef::Measure { fact, measure } => write!(f, "{fact}/{measure}"),
            StructureRef::Parameter { dim, param } => write!(f, "{dim}.{param}"),
        }
    }
}

impl StructureRef {
    /// Resolves `FACT`, `DIM`, `FACT/MEASURE`, `DIM.HIER` or `DIM.PARAM`.
    pub fn resolve(schema: &Constellation, text: &str) -> Result<Self, PreferenceError> {
        let unknown = || PreferenceError::UnknownName(text.to_string());
        if let Some((fact, measure)) = text.split_once('/') {
            let f = schema.fact(fact).ok_or_else(unknown)?;
            f.measure(measure).ok_or_else(unknown)?;
            return Ok(StructureRef::Measure {
                fact: fact.to_string(),
                measure: measure.to_string(),
            });
        }
        if let Some((dim, name)) = text.split_once('.') {
            let d = schema.dimension(dim).ok_or_else(unknown)?;
            if d.hierarchy(name).is_some() {
                return Ok(StructureRef::Hierarchy {
                    dim: dim.to_string(),
                    hier: name.to_string(),
                });
            }
            d.attribute(name).ok_or_else(unknown)?;
            if !d.is_parameter(name) {
                return Err(PreferenceError::NotAParameter(text.to_string()));
            }
            return Ok(StructureRef::Parameter {
                dim: dim.to_string(),
                param: name.to_string(),
            });
        }
        if schema.fact(text).is_some() {
            Ok(StructureRef::Fact(text.to_string()))
        } else if schema.dimension(text).is_some() {
            Ok(StructureRef::Dimension(text.to_string()))
        } else {
            Err(unknown())
        }
    }

    /// Elements of one category share this key.
    fn category(&self) -> (u8, &str) {
        match self {
            StructureRef::Fact(_) => (0, ""),
            StructureRef::Dimension(_) => (1, ""),
            StructureRef::Hierarchy { dim, .. } => (2, dim),
            StructureRef::Measure { fact, .. } => (3, fact),
            StructureRef::Parameter { dim, .. } => (4, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PreferenceElement {
    Structure(StructureRef),
    Predicate(RestrictionPredicate),
}

impl fmt::Display for PreferenceElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferenceElement::Structure(s) => s.fmt(f),
            PreferenceElement::Predicate(p) => p.fmt(f),
        }
    }
}

/// One axis of a preference context; hierarchy and levels may be absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceAxis {
    pub dim: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hier: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<String>,
}

/// `(subject; axes; restrictions)`, any part possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PreferenceContext {
    pub fact: Option<String>,
    pub axes: Vec<PreferenceAxis>,
    pub restrictions: BTreeSet<RestrictionPredicate>,
}

impl PreferenceContext {
    pub fn is_absolute(&self) -> bool {
        self.fact.is_none() && self.axes.is_empty() && self.restrictions.is_empty()
    }

    /// Tree rendering with the context-tree rules, without a root node.
    pub fn tree(&self) -> ContextTree {
        build_tree(
            false,
            self.fact.as_deref(),
            &[],
            self.axes.iter().map(|a| AxisView {
                dim: &a.dim,
                hier: a.hier.as_deref(),
                params: &a.params,
                weak: None,
            }),
            &self.restrictions,
        )
    }
}

/// Whether every edge of the preference-context tree is an edge of the
/// context tree, and every isolated node of it appears in the context tree.
pub fn covers(pc: &PreferenceContext, ctx: &AnalysisContext) -> bool {
    tree_covers(&pc.tree(), &to_tree(ctx))
}

pub fn tree_covers(pc: &ContextTree, ctx: &ContextTree) -> bool {
    let edges = ctx.edges();
    pc.edges().is_subset(&edges) && pc.isolated().all(|l| ctx.contains(l))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preference {
    pub id: String,
    pub owner: String,
    pub kind: PreferenceKind,
    pub order: Vec<PreferenceElement>,
    pub context: PreferenceContext,
}

#[derive(Debug, thiserror::Error)]
pub enum PreferenceError {
    #[error("empty preference order")]
    EmptyOrder,
    #[error("duplicate element '{0}' in preference order")]
    DuplicateElement(String),
    #[error("mixed category: '{0}' does not belong with '{1}'")]
    MixedCategory(String, String),
    #[error("unknown name '{0}'")]
    UnknownName(String),
    #[error("'{0}' is not a hierarchy parameter")]
    NotAParameter(String),
    #[error("invalid predicate")]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("preference context: {0}")]
    InvalidContext(String),
    #[error("unknown preference '{0}'")]
    Unknown(String),
    #[error("duplicate preference id '{0}'")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A predicate written as text (`"DIM.ATTR = 'x'"`) or as a JSON object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateItem {
    Text(String),
    Object(PredicateSpec),
}

impl PredicateItem {
    pub fn spec(&self) -> Result<PredicateSpec, SyntaxError> {
        match self {
            PredicateItem::Text(t) => PredicateSpec::parse(t),
            PredicateItem::Object(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PreferenceContextDoc {
    #[serde(default)]
    pub fact: Option<String>,
    #[serde(default)]
    pub axes: Vec<PreferenceAxis>,
    #[serde(default)]
    pub restrictions: Vec<PredicateItem>,
}

/// Wire form of a preference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub owner: String,
    pub kind: PreferenceKind,
    pub order: Vec<PredicateItem>,
    #[serde(default)]
    pub context: PreferenceContextDoc,
}

impl PreferenceContextDoc {
    pub fn resolve(&self, schema: &Constellation) -> Result<PreferenceContext, PreferenceError> {
        let invalid = |m: String| PreferenceError::InvalidContext(m);
        if let Some(f) = &self.fact {
            schema
                .fact(f)
                .ok_or_else(|| PreferenceError::UnknownName(f.clone()))?;
        }
        let mut dims = BTreeSet::new();
        for a in &self.axes {
            let d = schema
                .dimension(&a.dim)
                .ok_or_else(|| PreferenceError::UnknownName(a.dim.clone()))?;
            if !dims.insert(&a.dim) {
                return Err(invalid(format!("dimension {} listed twice", a.dim)));
            }
            if let Some(f) = &self.fact {
                if !schema.in_star(f, &a.dim) {
                    return Err(invalid(format!("{} is not linked to {f}", a.dim)));
                }
            }
            match &a.hier {
                None if !a.params.is_empty() => {
                    return Err(invalid(format!("levels on {} need a hierarchy", a.dim)))
                }
                None => {}
                Some(h) => {
                    let h = d
                        .hierarchy(h)
                        .ok_or_else(|| PreferenceError::UnknownName(format!("{}.{h}", a.dim)))?;
                    for p in &a.params {
                        if !h.contains(p) {
                            return Err(invalid(format!("{p} is not in {}", h.name)));
                        }
                    }
                    if !a.params.windows(2).all(|w| h.precedes(&w[1], &w[0])) {
                        return Err(invalid(format!(
                            "levels {:?} are not ordered coarse to fine in {}",
                            a.params, h.name
                        )));
                    }
                }
            }
        }
        let restrictions = self
            .restrictions
            .iter()
            .map(|r| Ok(type_predicate(schema, self.fact.as_deref(), &r.spec()?)?))
            .collect::<Result<_, PreferenceError>>()?;
        Ok(PreferenceContext {
            fact: self.fact.clone(),
            axes: self.axes.clone(),
            restrictions,
        })
    }
}

impl PreferenceDoc {
    /// Validates against the schema; `id` must be set by the caller.
    pub fn resolve(
        &self,
        schema: &Constellation,
        id: String,
    ) -> Result<Preference, PreferenceError> {
        if self.order.is_empty() {
            return Err(PreferenceError::EmptyOrder);
        }
        let mut order = Vec::new();
        for item in &self.order {
            let el = match (self.kind, item) {
                (PreferenceKind::Structure, PredicateItem::Text(t)) if !looks_like_predicate(t) => {
                    PreferenceElement::Structure(StructureRef::resolve(schema, t)?)
                }
                (PreferenceKind::Value, item) => {
                    PreferenceElement::Predicate(type_predicate(schema, None, &item.spec()?)?)
                }
                (PreferenceKind::Structure, other) => {
                    let text = match other {
                        PredicateItem::Text(t) => t.clone(),
                        PredicateItem::Object(p) => p.to_string(),
                    };
                    return Err(PreferenceError::MixedCategory(text, "structure".into()));
                }
            };
            if order.contains(&el) {
                return Err(PreferenceError::DuplicateElement(el.to_string()));
            }
            if let (Some(PreferenceElement::Structure(first)), PreferenceElement::Structure(s)) =
                (order.first(), &el)
            {
                if first.category() != s.category() {
                    return Err(PreferenceError::MixedCategory(
                        s.to_string(),
                        first.to_string(),
                    ));
                }
            }
            order.push(el);
        }
        Ok(Preference {
            id,
            owner: self.owner.clone(),
            kind: self.kind,
            order,
            context: self.context.resolve(schema)?,
        })
    }
}

fn looks_like_predicate(text: &str) -> bool {
    text.contains(|c: char| c.is_whitespace() || "=<>!≠'(".contains(c))
}

impl Preference {
    pub fn to_doc(&self) -> PreferenceDoc {
        PreferenceDoc {
            id: Some(self.id.clone()),
            owner: self.owner.clone(),
            kind: self.kind,
            order: self
                .order
                .iter()
                .map(|e| PredicateItem::Text(e.to_string()))
                .collect(),
            context: PreferenceContextDoc {
                fact: self.context.fact.clone(),
                axes: self.context.axes.clone(),
                restrictions: self
                    .context
                    .restrictions
                    .iter()
                    .map(|p| PredicateItem::Text(p.to_string()))
                    .collect(),
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_doc()).expect("preference serializes")
    }
}

/// Preferences of all users, identified `P<n>`.
#[derive(Debug, Clone)]
pub struct PreferenceStore {
    prefs: Vec<Preference>,
    next: u64,
}

impl Default for PreferenceStore {
    fn default() -> Self {
        Self {
            prefs: Vec::new(),
            next: 1,
        }
    }
}

impl PreferenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.prefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Preference> {
        self.prefs.iter().find(|p| p.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Preference> {
        self.prefs.iter()
    }

    pub fn by_owner<'s>(&'s self, owner: &'s str) -> impl Iterator<Item = &'s Preference> {
        self.prefs.iter().filter(move |p| p.owner == owner)
    }

    /// Adds a preference. A missing id is assigned from the store counter.
    pub fn add(
        &mut self,
        schema: &Constellation,
        doc: &PreferenceDoc,
    ) -> Result<&Preference, PreferenceError> {
        let id = match &doc.id {
            Some(id) if self.get(id).is_some() => {
                return Err(PreferenceError::DuplicateId(id.clone()))
            }
            Some(id) => id.clone(),
            None => loop {
                let id = format!("P{}", self.next);
                self.next += 1;
                if self.get(&id).is_none() {
                    break id;
                }
            },
        };
        let pref = doc.resolve(schema, id)?;
        if let Some(n) = pref
            .id
            .strip_prefix('P')
            .and_then(|n| n.parse::<u64>().ok())
        {
            self.next = self.next.max(n + 1);
        }
        self.prefs.push(pref);
        Ok(self.prefs.last().expect("just pushed"))
    }

    pub fn remove(&mut self, id: &str) -> Result<Preference, PreferenceError> {
        let i = self
            .prefs
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| PreferenceError::Unknown(id.to_string()))?;
        Ok(self.prefs.remove(i))
    }

    /// The owner's preferences whose context the analysis context covers,
    /// in natural id order.
    pub fn candidates(&self, owner: &str, ctx: &AnalysisContext) -> Vec<&Preference> {
        let tree = to_tree(ctx);
        let mut out: Vec<&Preference> = self
            .prefs
            .iter()
            .filter(|p| p.owner == owner && tree_covers(&p.context.tree(), &tree))
            .collect();
        out.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        out
    }

    pub fn load_jsonl(
        schema: &Constellation,
        reader: impl BufRead,
    ) -> Result<Self, PreferenceError> {
        let mut store = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let load = |message: String| PreferenceError::Load {
                line: i + 1,
                message,
            };
            let doc: PreferenceDoc =
                serde_json::from_str(&line).map_err(|e| load(e.to_string()))?;
            store.add(schema, &doc).map_err(|e| load(describe(&e)))?;
        }
        Ok(store)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in &self.prefs {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&p.to_doc()).expect("preference serializes")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextIds, MeasureRef, Navigator};
    use crate::fixtures::sales_schema;

    fn doc(json: &str) -> PreferenceDoc {
        serde_json::from_str(json).unwrap()
    }

    fn paper_store() -> PreferenceStore {
        let schema = sales_schema();
        let mut s = PreferenceStore::new();
        for d in [
            r#"{"owner":"U1","kind":"structure","order":["DPRODUITS.GAMME","DPRODUITS.CODEP"]}"#,
            r#"{"owner":"U1","kind":"structure","order":["FVENTES/MONTANT","FVENTES/REMISE"],
                "context":{"fact":"FVENTES"}}"#,
            r#"{"owner":"U1","kind":"value","order":["DCLIENTS.REGION = 'M-Pyrenees'"],
                "context":{"axes":[{"dim":"DCLIENTS"}]}}"#,
        ] {
            s.add(&schema, &doc(d)).unwrap();
        }
        s
    }

    fn contexts(nav: &Navigator) -> (AnalysisContext, AnalysisContext) {
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
        let ca2 = nav.drilldown(&ca1, "DCLIENTS", "NDEPT").unwrap();
        let ca3 = nav.rotate(&ca2, "DCLIENTS", "DPRODUITS", "HPROD").unwrap();
        (ca2, ca3)
    }

    #[test]
    fn paper_preferences_and_candidates() {
        let schema = sales_schema();
        let store = paper_store();
        let p1 = store.get("P1").unwrap();
        assert!(p1.context.is_absolute());
        assert!(!store.get("P2").unwrap().context.is_absolute());
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let (ca2, ca3) = contexts(&nav);
        let names = |ctx| -> Vec<String> {
            store
                .candidates("U1", ctx)
                .iter()
                .map(|p| p.id.clone())
                .collect()
        };
        assert_eq!(names(&ca3), ["P1", "P2"]);
        assert_eq!(names(&ca2), ["P1", "P2", "P3"]);
        assert!(store.candidates("U2", &ca3).is_empty());
        assert!(PreferenceStore::new().candidates("U1", &ca3).is_empty());
    }

    #[test]
    fn category_errors() {
        let schema = sales_schema();
        let mut s = PreferenceStore::new();
        let mixed = doc(
            r#"{"owner":"U1","kind":"structure","order":["DPRODUITS.GAMME","FVENTES/MONTANT"]}"#,
        );
        assert!(matches!(
            s.add(&schema, &mixed),
            Err(PreferenceError::MixedCategory(..))
        ));
        let across = doc(
            r#"{"owner":"U1","kind":"structure","order":["DPRODUITS.GAMME","DCLIENTS.REGION"]}"#,
        );
        assert!(matches!(
            s.add(&schema, &across),
            Err(PreferenceError::MixedCategory(..))
        ));
        let empty = doc(r#"{"owner":"U1","kind":"structure","order":[]}"#);
        assert!(matches!(
            s.add(&schema, &empty),
            Err(PreferenceError::EmptyOrder)
        ));
        let pred = doc(r#"{"owner":"U1","kind":"structure","order":["DCLIENTS.REGION = 'x'"]}"#);
        assert!(matches!(
            s.add(&schema, &pred),
            Err(PreferenceError::MixedCategory(..))
        ));
        let weak = doc(r#"{"owner":"U1","kind":"structure","order":["DCLIENTS.NOMDEPT"]}"#);
        assert!(matches!(
            s.add(&schema, &weak),
            Err(PreferenceError::NotAParameter(_))
        ));
        let unknown = doc(r#"{"owner":"U1","kind":"structure","order":["DCLIENTS.PAYS"]}"#);
        assert!(matches!(
            s.add(&schema, &unknown),
            Err(PreferenceError::UnknownName(_))
        ));
        assert!(s.is_empty());
    }

    #[test]
    fn coverage_cases() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let (ca2, ca3) = contexts(&nav);
        let pc = |json: &str| {
            serde_json::from_str::<PreferenceContextDoc>(json)
                .unwrap()
                .resolve(&schema)
                .unwrap()
        };
        assert!(covers(&pc("{}"), &ca3));
        assert!(covers(&pc(r#"{"fact":"FVENTES"}"#), &ca3));
        assert!(!covers(&pc(r#"{"axes":[{"dim":"DCLIENTS"}]}"#), &ca3));
        assert!(covers(
            &pc(r#"{"axes":[{"dim":"DCLIENTS","hier":"HGEOFR","params":["REGION","NDEPT"]}]}"#),
            &ca2
        ));
        assert!(!covers(
            &pc(r#"{"axes":[{"dim":"DCLIENTS","hier":"HGEOFR","params":["NDEPT"]}]}"#),
            &ca2
        ));
        assert!(!covers(
            &pc(r#"{"axes":[{"dim":"DCLIENTS","hier":"HGEOUS"}]}"#),
            &ca2
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let schema = sales_schema();
        let s = paper_store();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let back = PreferenceStore::load_jsonl(&schema, buf.as_slice()).unwrap();
        assert_eq!(
            back.iter().collect::<Vec<_>>(),
            s.iter().collect::<Vec<_>>()
        );
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""order":["DCLIENTS.REGION = 'M-Pyrenees'"]"#));
    }
}
