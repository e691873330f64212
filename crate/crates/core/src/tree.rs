//! Labeled tree rendering of analysis contexts.
//!
//! Node labels are qualified by role (`fact:FVENTES`, `measure:SUM(REMISE)`,
//! `dim:DCLIENTS`, `hier:HGEOFR`, `param:REGION`, `weak:NOMDEPT`,
//! `attr:VILLE`, `pred:DCLIENTS.REGION = 'M-Pyrenees'`). Parameter nodes form
//! a chain from the coarsest displayed level down to the finest.

use crate::context::{AnalysisContext, MeasureRef, PredicateTarget, RestrictionPredicate};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Root,
    Fact,
    Measure,
    Dimension,
    Hierarchy,
    Parameter,
    Weak,
    /// A restricted attribute or measure that is not otherwise displayed.
    Attribute,
    Predicate,
}

impl NodeKind {
    fn prefix(self) -> &'static str {
        match self {
            NodeKind::Root => "context",
            NodeKind::Fact => "fact",
            NodeKind::Measure => "measure",
            NodeKind::Dimension => "dim",
            NodeKind::Hierarchy => "hier",
            NodeKind::Parameter => "param",
            NodeKind::Weak => "weak",
            NodeKind::Attribute => "attr",
            NodeKind::Predicate => "pred",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub kind: NodeKind,
    pub name: String,
}

impl Label {
    pub fn new(kind: NodeKind, name: impl Into<String>) -> Self {
        Self {
            kind,
            name: name.into(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == NodeKind::Root {
            f.write_str("context")
        } else {
            write!(f, "{}:{}", self.kind.prefix(), self.name)
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeNode {
    pub label: Label,
    pub children: Vec<TreeNode>,
}

/// A labeled forest. Context trees have a single `context` root; preference
/// context trees may have several roots (or none).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextTree {
    pub roots: Vec<TreeNode>,
}

/// A parent-to-child pair of labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub parent: Label,
    pub child: Label,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.parent, self.child)
    }
}

impl Edge {
    pub fn new(parent: Label, child: Label) -> Self {
        Self { parent, child }
    }
}

impl ContextTree {
    pub fn edges(&self) -> BTreeSet<Edge> {
        fn walk(n: &TreeNode, out: &mut BTreeSet<Edge>) {
            for c in &n.children {
                out.insert(Edge::new(n.label.clone(), c.label.clone()));
                walk(c, out);
            }
        }
        let mut out = BTreeSet::new();
        for r in &self.roots {
            walk(r, &mut out);
        }
        out
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        fn walk(n: &TreeNode, out: &mut BTreeSet<Label>) {
            out.insert(n.label.clone());
            n.children.iter().for_each(|c| walk(c, out));
        }
        let mut out = BTreeSet::new();
        self.roots.iter().for_each(|r| walk(r, &mut out));
        out
    }

    pub fn node_count(&self) -> usize {
        fn count(n: &TreeNode) -> usize {
            1 + n.children.iter().map(count).sum::<usize>()
        }
        self.roots.iter().map(count).sum()
    }

    /// Nodes without any incident edge.
    pub fn isolated(&self) -> impl Iterator<Item = &Label> {
        self.roots
            .iter()
            .filter(|r| r.children.is_empty())
            .map(|r| &r.label)
    }

    pub fn contains(&self, label: &Label) -> bool {
        fn walk(n: &TreeNode, l: &Label) -> bool {
            &n.label == l || n.children.iter().any(|c| walk(c, l))
        }
        self.roots.iter().any(|r| walk(r, label))
    }

    /// Visits every node with its ancestors, outermost first.
    pub fn walk(&self, mut f: impl FnMut(&Label, &[&Label])) {
        fn go<'t>(
            n: &'t TreeNode,
            path: &mut Vec<&'t Label>,
            f: &mut dyn FnMut(&Label, &[&Label]),
        ) {
            f(&n.label, path);
            path.push(&n.label);
            for c in &n.children {
                go(c, path, f);
            }
            path.pop();
        }
        let mut path = Vec::new();
        for r in &self.roots {
            go(r, &mut path, &mut f);
        }
    }

    /// Nested `{"label","children"}` form; a single root is emitted bare.
    pub fn to_json(&self) -> serde_json::Value {
        match self.roots.as_slice() {
            [root] => serde_json::to_value(root).expect("tree serializes"),
            roots => serde_json::to_value(roots).expect("tree serializes"),
        }
    }
}

/// All labeled edges of a tree.
pub fn tree_edges(tree: &ContextTree) -> BTreeSet<Edge> {
    tree.edges()
}

/// One axis as seen by the tree builder. Hierarchy and levels are optional
/// for preference contexts.
pub(crate) struct AxisView<'a> {
    pub dim: &'a str,
    pub hier: Option<&'a str>,
    pub params: &'a [String],
    pub weak: Option<&'a BTreeMap<String, Vec<String>>>,
}

/// Arena used while assembling a tree, so predicates can be hung on nodes
/// created earlier.
#[derive(Default)]
struct Arena {
    labels: Vec<Label>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl Arena {
    fn add(&mut self, parent: Option<usize>, label: Label) -> usize {
        let id = self.labels.len();
        self.labels.push(label);
        self.children.push(Vec::new());
        match parent {
            Some(p) => self.children[p].push(id),
            None => self.roots.push(id),
        }
        id
    }

    fn find_child(&self, parent: Option<usize>, label: &Label) -> Option<usize> {
        let pool = match parent {
            Some(p) => &self.children[p],
            None => &self.roots,
        };
        pool.iter().copied().find(|&i| &self.labels[i] == label)
    }

    fn finish(self) -> ContextTree {
        fn build(a: &Arena, i: usize) -> TreeNode {
            TreeNode {
                label: a.labels[i].clone(),
                children: a.children[i].iter().map(|&c| build(a, c)).collect(),
            }
        }
        ContextTree {
            roots: self.roots.iter().map(|&r| build(&self, r)).collect(),
        }
    }
}

/// Builds a tree with the shared placement rules.
///
/// Predicates hang on the node of the property they restrict: the first
/// displayed measure node for that measure, or the parameter/weak node
/// showing that attribute. Otherwise an `attr:` property node is created
/// under the dimension node (dimension on an axis), else under the fact
/// node, else as a root of its own.
pub(crate) fn build_tree<'a>(
    with_root: bool,
    fact: Option<&str>,
    measures: &[MeasureRef],
    axes: impl IntoIterator<Item = AxisView<'a>>,
    restrictions: &BTreeSet<RestrictionPredicate>,
) -> ContextTree {
    let mut a = Arena::default();
    let root = with_root.then(|| a.add(None, Label::new(NodeKind::Root, "")));
    let fact_node = fact.map(|f| a.add(root, Label::new(NodeKind::Fact, f)));
    let mut measure_nodes: Vec<(String, usize)> = Vec::new();
    if let Some(fnode) = fact_node {
        for m in measures {
            let id = a.add(Some(fnode), Label::new(NodeKind::Measure, m.to_string()));
            measure_nodes.push((m.measure.clone(), id));
        }
    }
    let mut dim_nodes: Vec<(String, usize)> = Vec::new();
    let mut shown_attrs: Vec<(String, usize)> = Vec::new();
    for axis in axes {
        let d = a.add(root, Label::new(NodeKind::Dimension, axis.dim));
        dim_nodes.push((axis.dim.to_string(), d));
        let Some(hier) = axis.hier else { continue };
        let mut parent = a.add(Some(d), Label::new(NodeKind::Hierarchy, hier));
        for p in axis.params {
            parent = a.add(Some(parent), Label::new(NodeKind::Parameter, p.as_str()));
            shown_attrs.push((p.clone(), parent));
            if let Some(ws) = axis.weak.and_then(|w| w.get(p)) {
                for w in ws {
                    let id = a.add(Some(parent), Label::new(NodeKind::Weak, w.as_str()));
                    shown_attrs.push((w.clone(), id));
                }
            }
        }
    }
    for pred in restrictions {
        let existing = match &pred.target {
            PredicateTarget::Measure { measure, .. } => measure_nodes
                .iter()
                .find(|(m, _)| m == measure)
                .map(|(_, id)| *id),
            PredicateTarget::Attribute { attr, .. } => shown_attrs
                .iter()
                .find(|(n, _)| n == attr)
                .map(|(_, id)| *id),
        };
        let host = existing.unwrap_or_else(|| {
            let parent = match &pred.target {
                PredicateTarget::Attribute { dim, .. } => dim_nodes
                    .iter()
                    .find(|(d, _)| d == dim)
                    .map(|(_, id)| *id)
                    .or(fact_node),
                PredicateTarget::Measure { .. } => fact_node,
            };
            let label = Label::new(NodeKind::Attribute, pred.target.property());
            a.find_child(parent, &label)
                .unwrap_or_else(|| a.add(parent, label))
        });
        a.add(
            Some(host),
            Label::new(NodeKind::Predicate, pred.to_string()),
        );
    }
    a.finish()
}

/// Tree rendering of a context: the root holds the fact subtree and one
/// subtree per axis. The context identifier is not part of the tree.
pub fn to_tree(ctx: &AnalysisContext) -> ContextTree {
    build_tree(
        true,
        Some(ctx.fact()),
        ctx.measures(),
        ctx.axes().iter().map(|ax| AxisView {
            dim: &ax.dim,
            hier: Some(&ax.hier),
            params: &ax.params,
            weak: Some(&ax.weak),
        }),
        ctx.restrictions(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextIds, Navigator, PredicateSpec};
    use crate::fixtures::{minimal_schema, sales_schema};

    fn l(kind: NodeKind, name: &str) -> Label {
        Label::new(kind, name)
    }

    fn edge(p: (NodeKind, &str), c: (NodeKind, &str)) -> Edge {
        Edge::new(l(p.0, p.1), l(c.0, c.1))
    }

    #[test]
    fn ca2_tree_matches_figure() {
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
        let ca2 = nav.drilldown(&ca1, "DCLIENTS", "NDEPT").unwrap();
        let t = to_tree(&ca2);
        let edges = t.edges();
        use NodeKind::*;
        for e in [
            edge((Root, ""), (Fact, "FVENTES")),
            edge((Fact, "FVENTES"), (Measure, "SUM(REMISE)")),
            edge((Root, ""), (Dimension, "DCLIENTS")),
            edge((Dimension, "DCLIENTS"), (Hierarchy, "HGEOFR")),
            edge((Hierarchy, "HGEOFR"), (Parameter, "REGION")),
            edge((Parameter, "REGION"), (Parameter, "NDEPT")),
            edge((Parameter, "NDEPT"), (Weak, "NOMDEPT")),
            edge((Dimension, "DTEMPS"), (Hierarchy, "HTEMPS")),
            edge((Hierarchy, "HTEMPS"), (Parameter, "ANNEE")),
        ] {
            assert!(edges.contains(&e), "missing {e}");
        }
        assert_eq!(edges.len(), t.node_count() - 1);
        assert_eq!(edges.len(), 10);
        assert_eq!(
            t.to_json()["children"][1]["children"][0]["label"],
            "hier:HGEOFR"
        );
    }

    #[test]
    fn minimal_context_tree() {
        let schema = minimal_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ctx = nav
            .display("F", &[MeasureRef::sum("M")], &[("D".into(), "H".into())])
            .unwrap();
        let t = to_tree(&ctx);
        assert_eq!(t.node_count(), 6);
        assert_eq!(t.edges().len(), 5);
    }

    #[test]
    fn single_node_has_no_edges() {
        let t = ContextTree {
            roots: vec![TreeNode {
                label: l(NodeKind::Fact, "F"),
                children: vec![],
            }],
        };
        assert!(tree_edges(&t).is_empty());
        assert_eq!(t.isolated().count(), 1);
    }

    #[test]
    fn predicates_hang_on_properties() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[
                    ("DPRODUITS".into(), "HPROD".into()),
                    ("DTEMPS".into(), "HTEMPS".into()),
                ],
            )
            .unwrap();
        let ctx = nav
            .restrict(&ctx, &PredicateSpec::parse("DTEMPS.ANNEE = 2009").unwrap())
            .unwrap();
        let ctx = nav
            .restrict(
                &ctx,
                &PredicateSpec::parse("DCLIENTS.REGION = 'M-Pyrenees'").unwrap(),
            )
            .unwrap();
        let ctx = nav
            .restrict(&ctx, &PredicateSpec::parse("FVENTES/REMISE > 10").unwrap())
            .unwrap();
        let ctx = nav
            .restrict(
                &ctx,
                &PredicateSpec::parse("FVENTES/MONTANT > 100").unwrap(),
            )
            .unwrap();
        let edges = to_tree(&ctx).edges();
        use NodeKind::*;
        assert!(edges.contains(&edge(
            (Parameter, "ANNEE"),
            (Predicate, "DTEMPS.ANNEE = 2009")
        )));
        assert!(edges.contains(&edge((Fact, "FVENTES"), (Attribute, "REGION"))));
        assert!(edges.contains(&edge(
            (Attribute, "REGION"),
            (Predicate, "DCLIENTS.REGION = 'M-Pyrenees'")
        )));
        assert!(edges.contains(&edge(
            (Measure, "SUM(REMISE)"),
            (Predicate, "FVENTES/REMISE > 10.0")
        )));
        assert!(edges.contains(&edge((Fact, "FVENTES"), (Attribute, "MONTANT"))));
    }
}
