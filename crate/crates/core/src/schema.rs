//! Constellation schema: facts, measures, dimensions, hierarchies and the
//! star mapping, with loading and validation.

use crate::lex::is_identifier;
use crate::value::ValueKind;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub name: String,
    pub measures: Vec<Measure>,
}

impl Fact {
    pub fn measure(&self, name: &str) -> Option<&Measure> {
        self.measures.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: ValueKind,
}

/// A chain of parameters ordered from the root (the dimension identifier)
/// to the coarsest level. The `ALL` level is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub name: String,
    pub params: Vec<String>,
    #[serde(default)]
    pub weak: BTreeMap<String, Vec<String>>,
}

impl Hierarchy {
    pub fn position(&self, param: &str) -> Option<usize> {
        self.params.iter().position(|p| p == param)
    }

    pub fn contains(&self, param: &str) -> bool {
        self.position(param).is_some()
    }

    /// `finer ≺ coarser` along this hierarchy.
    pub fn precedes(&self, finer: &str, coarser: &str) -> bool {
        match (self.position(finer), self.position(coarser)) {
            (Some(i), Some(j)) => i < j,
            _ => false,
        }
    }

    /// Coarsest non-`ALL` level.
    pub fn coarsest(&self) -> &str {
        self.params.last().map(String::as_str).unwrap_or_default()
    }

    pub fn weak_of(&self, param: &str) -> &[String] {
        self.weak.get(param).map(Vec::as_slice).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub id: String,
    pub attributes: Vec<Attribute>,
    pub hierarchies: Vec<Hierarchy>,
}

impl Dimension {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn hierarchy(&self, name: &str) -> Option<&Hierarchy> {
        self.hierarchies.iter().find(|h| h.name == name)
    }

    /// Name of the implicit top level.
    pub fn all_attribute(&self) -> String {
        format!("ALL_{}", self.name)
    }

    /// Parameters in order of first appearance across hierarchies.
    pub fn parameters(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for h in &self.hierarchies {
            for p in &h.params {
                if seen.insert(p.as_str()) {
                    out.push(p.as_str());
                }
            }
        }
        out
    }

    pub fn weak_attributes(&self) -> BTreeSet<&str> {
        self.hierarchies
            .iter()
            .flat_map(|h| h.weak.values().flatten())
            .map(String::as_str)
            .collect()
    }

    pub fn is_parameter(&self, name: &str) -> bool {
        self.hierarchies.iter().any(|h| h.contains(name))
    }
}

/// A constellation schema. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constellation {
    pub facts: Vec<Fact>,
    pub dimensions: Vec<Dimension>,
    pub star: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed schema document")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read schema")]
    Io(#[from] std::io::Error),
    #[error("invalid schema: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Finding>),
}

/// The rule a schema element violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    InvalidName,
    DuplicateName,
    NamespaceOverlap,
    EmptyMeasures,
    NonNumericMeasure,
    StarUnknownFact,
    StarUnknownDimension,
    FactMissingFromStar,
    AttributeDisjointness,
    HierarchyDisjointness,
    IdAttribute,
    UnknownAttribute,
    UnclassifiedAttribute,
    ParameterWeakOverlap,
    NoHierarchy,
    RootParameter,
    TotalOrderViolated,
    WeakMapping,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::InvalidName => "invalid name",
            Rule::DuplicateName => "duplicate name",
            Rule::NamespaceOverlap => "fact/dimension namespace overlap",
            Rule::EmptyMeasures => "fact without measures",
            Rule::NonNumericMeasure => "non-numeric measure",
            Rule::StarUnknownFact => "star key is not a fact",
            Rule::StarUnknownDimension => "star references unknown dimension",
            Rule::FactMissingFromStar => "fact missing from star",
            Rule::AttributeDisjointness => "attribute disjointness",
            Rule::HierarchyDisjointness => "hierarchy disjointness",
            Rule::IdAttribute => "id attribute",
            Rule::UnknownAttribute => "unknown attribute",
            Rule::UnclassifiedAttribute => "unclassified attribute",
            Rule::ParameterWeakOverlap => "parameter/weak overlap",
            Rule::NoHierarchy => "dimension without hierarchy",
            Rule::RootParameter => "root parameter",
            Rule::TotalOrderViolated => "total order violated",
            Rule::WeakMapping => "weak mapping",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One violated invariant, located by an element path such as
/// `DCLIENTS/HGEOFR/CODEC`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub path: String,
    pub rule: Rule,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.rule)
    }
}

impl Constellation {
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let c: Constellation = serde_json::from_str(text)?;
        let findings = c.validate();
        if findings.is_empty() {
            Ok(c)
        } else {
            Err(SchemaError::Invalid(findings))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn fact(&self, name: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.name == name)
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// Dimensions the fact can be analysed along.
    pub fn star(&self, fact: &str) -> &[String] {
        self.star.get(fact).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn in_star(&self, fact: &str, dim: &str) -> bool {
        self.star(fact).iter().any(|d| d == dim)
    }

    /// The dimension declaring `attr`; attribute names are unique across dimensions.
    pub fn dimension_of_attribute(&self, attr: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.attribute(attr).is_some())
    }

    /// Checks every schema invariant. An empty report means the schema is valid.
    pub fn validate(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut push = |path: String, rule: Rule| out.push(Finding { path, rule });

        let mut fact_names = BTreeSet::new();
        for fact in &self.facts {
            if !is_identifier(&fact.name) {
                push(fact.name.clone(), Rule::InvalidName);
            }
            if !fact_names.insert(fact.name.as_str()) {
                push(fact.name.clone(), Rule::DuplicateName);
            }
            if fact.measures.is_empty() {
                push(fact.name.clone(), Rule::EmptyMeasures);
            }
            let mut measures = BTreeSet::new();
            for m in &fact.measures {
                let path = format!("{}/{}", fact.name, m.name);
                if !is_identifier(&m.name) {
                    push(path.clone(), Rule::InvalidName);
                }
                if !measures.insert(m.name.as_str()) {
                    push(path.clone(), Rule::DuplicateName);
                }
                if !m.kind.is_numeric() {
                    push(path, Rule::NonNumericMeasure);
                }
            }
            if !self.star.contains_key(&fact.name) {
                push(fact.name.clone(), Rule::FactMissingFromStar);
            }
        }

        let mut dim_names = BTreeSet::new();
        let mut attribute_owner: HashMap<&str, &str> = HashMap::new();
        let mut hierarchy_owner: HashMap<&str, &str> = HashMap::new();
        for dim in &self.dimensions {
            let dn = dim.name.as_str();
            if !is_identifier(dn) {
                push(dn.to_string(), Rule::InvalidName);
            }
            if !dim_names.insert(dn) {
                push(dn.to_string(), Rule::DuplicateName);
            }
            if fact_names.contains(dn) {
                push(dn.to_string(), Rule::NamespaceOverlap);
            }

            let mut own_attrs = BTreeSet::new();
            for a in &dim.attributes {
                let path = format!("{dn}.{}", a.name);
                if !is_identifier(&a.name) {
                    push(path.clone(), Rule::InvalidName);
                }
                if !own_attrs.insert(a.name.as_str()) {
                    push(path.clone(), Rule::DuplicateName);
                }
                match attribute_owner.get(a.name.as_str()) {
                    Some(owner) if *owner != dn => push(path, Rule::AttributeDisjointness),
                    _ => {
                        attribute_owner.insert(a.name.as_str(), dn);
                    }
                }
            }
            if !own_attrs.contains(dim.id.as_str()) {
                push(format!("{dn}.{}", dim.id), Rule::IdAttribute);
            }
            if dim.hierarchies.is_empty() {
                push(dn.to_string(), Rule::NoHierarchy);
            }

            let params: BTreeSet<&str> = dim.parameters().into_iter().collect();
            let weak = dim.weak_attributes();
            for w in weak.intersection(&params) {
                push(format!("{dn}.{w}"), Rule::ParameterWeakOverlap);
            }
            for a in &dim.attributes {
                let n = a.name.as_str();
                if n != dim.id && !params.contains(n) && !weak.contains(n) {
                    push(format!("{dn}.{n}"), Rule::UnclassifiedAttribute);
                }
            }

            let mut own_hiers = BTreeSet::new();
            for h in &dim.hierarchies {
                let hp = format!("{dn}/{}", h.name);
                if !is_identifier(&h.name) {
                    push(hp.clone(), Rule::InvalidName);
                }
                if !own_hiers.insert(h.name.as_str()) {
                    push(hp.clone(), Rule::DuplicateName);
                }
                match hierarchy_owner.get(h.name.as_str()) {
                    Some(owner) if *owner != dn => push(hp.clone(), Rule::HierarchyDisjointness),
                    _ => {
                        hierarchy_owner.insert(h.name.as_str(), dn);
                    }
                }
                if h.params.first() != Some(&dim.id) {
                    push(
                        format!(
                            "{hp}/{}",
                            h.params.first().map(String::as_str).unwrap_or("")
                        ),
                        Rule::RootParameter,
                    );
                }
                let mut seen = BTreeSet::new();
                for p in &h.params {
                    if !seen.insert(p.as_str()) {
                        push(format!("{hp}/{p}"), Rule::TotalOrderViolated);
                    }
                    if !own_attrs.contains(p.as_str()) {
                        push(format!("{hp}/{p}"), Rule::UnknownAttribute);
                    }
                }
                for (p, ws) in &h.weak {
                    if !h.contains(p) {
                        push(format!("{hp}/{p}"), Rule::WeakMapping);
                    }
                    for w in ws {
                        if !own_attrs.contains(w.as_str()) {
                            push(format!("{hp}/{p}/{w}"), Rule::UnknownAttribute);
                        }
                    }
                }
            }
        }

        for (fact, dims) in &self.star {
            if !fact_names.contains(fact.as_str()) {
                push(fact.clone(), Rule::StarUnknownFact);
            }
            let mut seen = BTreeSet::new();
            for d in dims {
                if !dim_names.contains(d.as_str()) {
                    push(format!("{fact}->{d}"), Rule::StarUnknownDimension);
                }
                if !seen.insert(d.as_str()) {
                    push(format!("{fact}->{d}"), Rule::DuplicateName);
                }
            }
        }
        out
    }
}
