//! Threaded annotations anchored on schema concepts or context elements.

use crate::anchor::{Anchor, AnchorError, ResolvedAnchor};
use crate::chain::describe;
use crate::context::AnalysisContext;
use crate::cube::MultidimensionalTable;
use crate::ids::natural_cmp;
use crate::schema::Constellation;
use crate::tree::to_tree;
use chrono::{DateTime, Duration, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Comment,
    Question,
    Answer,
    Conclusion,
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationKind::Comment => "comment",
            AnnotationKind::Question => "question",
            AnnotationKind::Answer => "answer",
            AnnotationKind::Conclusion => "conclusion",
        })
    }
}

impl std::str::FromStr for AnnotationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "comment" => Ok(AnnotationKind::Comment),
            "question" => Ok(AnnotationKind::Question),
            "answer" => Ok(AnnotationKind::Answer),
            "conclusion" => Ok(AnnotationKind::Conclusion),
            _ => Err(format!("unknown annotation kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotation {
    pub id: String,
    pub kind: AnnotationKind,
    pub content: String,
    pub author: String,
    pub created_at: DateTime<Utc>,
    pub parent: Option<String>,
    pub anchor: Anchor,
}

/// Client-supplied part of an annotation; the store assigns id and time.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AnnotationDraft {
    pub kind: AnnotationKind,
    pub content: String,
    pub author: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub anchor: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("invalid anchor")]
    Anchor(#[from] AnchorError),
    #[error("parent annotation '{0}' does not exist")]
    DanglingParent(String),
    #[error("an answer needs a parent annotation")]
    AnswerWithoutParent,
    #[error("unknown annotation '{0}'")]
    Unknown(String),
    #[error("duplicate annotation id '{0}'")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Annotations in insertion order. Identifiers `A<n>` and creation times
/// increase strictly with insertion.
pub struct AnnotationStore {
    entries: Vec<(Annotation, ResolvedAnchor)>,
    index: HashMap<String, usize>,
    next: u64,
    clock: Clock,
}

impl fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("len", &self.entries.len())
            .field("next", &self.next)
            .finish()
    }
}

impl Default for AnnotationStore {
    fn default() -> Self {
        Self::with_clock(Utc::now)
    }
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_clock(clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            next: 1,
            clock: Box::new(clock),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Annotation> {
        self.index.get(id).map(|&i| &self.entries[i].0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.entries.iter().map(|(a, _)| a)
    }

    fn check(
        &self,
        schema: &Constellation,
        kind: AnnotationKind,
        parent: Option<&str>,
        anchor: &Anchor,
    ) -> Result<ResolvedAnchor, AnnotationError> {
        let resolved = anchor.resolve(schema)?;
        match parent {
            Some(p) if !self.index.contains_key(p) => {
                Err(AnnotationError::DanglingParent(p.to_string()))
            }
            None if kind == AnnotationKind::Answer => Err(AnnotationError::AnswerWithoutParent),
            _ => Ok(resolved),
        }
    }

    pub fn add(
        &mut self,
        schema: &Constellation,
        draft: AnnotationDraft,
    ) -> Result<&Annotation, AnnotationError> {
        let anchor = Anchor::parse(&draft.anchor).map_err(AnchorError::from)?;
        let resolved = self.check(schema, draft.kind, draft.parent.as_deref(), &anchor)?;
        let now = (self.clock)().trunc_subsecs(3);
        let created_at = match self.entries.last() {
            Some((last, _)) if now <= last.created_at => {
                last.created_at + Duration::milliseconds(1)
            }
            _ => now,
        };
        let annotation = Annotation {
            id: format!("A{}", self.next),
            kind: draft.kind,
            content: draft.content,
            author: draft.author,
            created_at,
            parent: draft.parent,
            anchor,
        };
        self.next += 1;
        Ok(self.push(annotation, resolved))
    }

    fn push(&mut self, annotation: Annotation, resolved: ResolvedAnchor) -> &Annotation {
        self.index.insert(annotation.id.clone(), self.entries.len());
        self.entries.push((annotation, resolved));
        &self.entries.last().expect("just pushed").0
    }

    /// Inserts a stored annotation as is (loading). Creation times must not
    /// go backwards.
    pub fn insert(
        &mut self,
        schema: &Constellation,
        annotation: Annotation,
    ) -> Result<&Annotation, AnnotationError> {
        if self.index.contains_key(&annotation.id) {
            return Err(AnnotationError::DuplicateId(annotation.id));
        }
        let resolved = self.check(
            schema,
            annotation.kind,
            annotation.parent.as_deref(),
            &annotation.anchor,
        )?;
        if let Some((last, _)) = self.entries.last() {
            if annotation.created_at <= last.created_at {
                return Err(AnnotationError::Load {
                    line: self.entries.len() + 1,
                    message: format!("{} is not later than {}", annotation.id, last.id),
                });
            }
        }
        if let Some(n) = annotation
            .id
            .strip_prefix('A')
            .and_then(|n| n.parse::<u64>().ok())
        {
            self.next = self.next.max(n + 1);
        }
        Ok(self.push(annotation, resolved))
    }

    /// Reads JSON lines; blank lines are skipped.
    pub fn load_jsonl(
        schema: &Constellation,
        reader: impl BufRead,
    ) -> Result<Self, AnnotationError> {
        let mut store = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let a: Annotation = serde_json::from_str(&line).map_err(|e| AnnotationError::Load {
                line: i + 1,
                message: e.to_string(),
            })?;
            store.insert(schema, a).map_err(|e| match e {
                AnnotationError::Load { .. } | AnnotationError::Io(_) => e,
                other => AnnotationError::Load {
                    line: i + 1,
                    message: describe(&other),
                },
            })?;
        }
        Ok(store)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for a in self.iter() {
            writeln!(out, "{}", a.to_json_line())?;
        }
        Ok(())
    }

    /// Annotations applying to a context: global ones whose concepts all
    /// appear in its tree, and local ones written on this very context.
    pub fn resolve(
        &self,
        ctx: &AnalysisContext,
        table: Option<&MultidimensionalTable>,
    ) -> Vec<&Annotation> {
        let tree = to_tree(ctx);
        let mut out: Vec<&Annotation> = self
            .entries
            .iter()
            .filter(|(_, r)| match &r.context {
                Some(c) => c == ctx.id(),
                None => r.applies_to_tree(&tree, table),
            })
            .map(|(a, _)| a)
            .collect();
        out.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| natural_cmp(&a.id, &b.id))
        });
        out
    }

    /// The root ancestor of `id` followed by all its descendants, by creation time.
    pub fn thread_of(&self, id: &str) -> Result<Vec<&Annotation>, AnnotationError> {
        let mut root = self
            .get(id)
            .ok_or_else(|| AnnotationError::Unknown(id.to_string()))?;
        while let Some(p) = root.parent.as_deref().and_then(|p| self.get(p)) {
            root = p;
        }
        let mut members = vec![root];
        let mut frontier = vec![root.id.as_str()];
        while let Some(parent) = frontier.pop() {
            for a in self.iter().filter(|a| a.parent.as_deref() == Some(parent)) {
                members.push(a);
                frontier.push(&a.id);
            }
        }
        members.sort_by_key(|a| a.created_at);
        Ok(members)
    }
}

impl Annotation {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("annotation serializes")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("annotation serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextIds, MeasureRef, Navigator};
    use crate::fixtures::sales_schema;
    use chrono::TimeZone;

    fn draft(
        kind: AnnotationKind,
        author: &str,
        parent: Option<&str>,
        anchor: &str,
    ) -> AnnotationDraft {
        AnnotationDraft {
            kind,
            content: "x".into(),
            author: author.into(),
            parent: parent.map(str::to_string),
            anchor: anchor.into(),
        }
    }

    fn frozen_store() -> AnnotationStore {
        let t = Utc.with_ymd_and_hms(2010, 3, 1, 9, 0, 0).unwrap();
        AnnotationStore::with_clock(move || t)
    }

    const A2: &str =
        "(CA2.FVENTES/Remise, DCLIENTS.HGEOFR/Region='M-Pyrenees', DTEMPS.HTEMPS/Annee=2009)";

    #[test]
    fn threads_and_ordering() {
        let schema = sales_schema();
        let mut s = frozen_store();
        use AnnotationKind::*;
        s.add(
            &schema,
            draft(Comment, "U1", None, "(FVENTES/Remise, λ, λ)"),
        )
        .unwrap();
        s.add(&schema, draft(Question, "U1", None, A2)).unwrap();
        s.add(&schema, draft(Comment, "U1", None, "(λ, DPRODUITS, λ)"))
            .unwrap();
        s.add(
            &schema,
            draft(Comment, "U1", None, "(λ, DCLIENTS.HGEOUS/Etat, λ)"),
        )
        .unwrap();
        let a5 = s
            .add(&schema, draft(Answer, "U2", Some("A2"), A2))
            .unwrap()
            .clone();
        assert_eq!(a5.id, "A5");
        let ids: Vec<&str> = s
            .thread_of("A5")
            .unwrap()
            .iter()
            .map(|a| a.id.as_str())
            .collect();
        assert_eq!(ids, ["A2", "A5"]);
        let ids: Vec<&str> = s
            .thread_of("A1")
            .unwrap()
            .iter()
            .map(|a| a.id.as_str())
            .collect();
        assert_eq!(ids, ["A1"]);
        let times: Vec<_> = s.iter().map(|a| a.created_at).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deep_thread() {
        let schema = sales_schema();
        let mut s = frozen_store();
        use AnnotationKind::*;
        s.add(&schema, draft(Question, "U1", None, "(λ, DPRODUITS, λ)"))
            .unwrap();
        s.add(
            &schema,
            draft(Answer, "U2", Some("A1"), "(λ, DPRODUITS, λ)"),
        )
        .unwrap();
        s.add(
            &schema,
            draft(Answer, "U1", Some("A2"), "(λ, DPRODUITS, λ)"),
        )
        .unwrap();
        let ids: Vec<&str> = s
            .thread_of("A2")
            .unwrap()
            .iter()
            .map(|a| a.id.as_str())
            .collect();
        assert_eq!(ids, ["A1", "A2", "A3"]);
        assert!(matches!(
            s.thread_of("A9"),
            Err(AnnotationError::Unknown(_))
        ));
    }

    #[test]
    fn invalid_additions() {
        let schema = sales_schema();
        let mut s = frozen_store();
        use AnnotationKind::*;
        assert!(matches!(
            s.add(&schema, draft(Answer, "U1", None, "(λ, DPRODUITS, λ)")),
            Err(AnnotationError::AnswerWithoutParent)
        ));
        assert!(matches!(
            s.add(
                &schema,
                draft(Comment, "U1", Some("A7"), "(λ, DPRODUITS, λ)")
            ),
            Err(AnnotationError::DanglingParent(_))
        ));
        assert!(matches!(
            s.add(&schema, draft(Comment, "U1", None, "(λ, λ, λ)")),
            Err(AnnotationError::Anchor(_))
        ));
        assert!(s.is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let schema = sales_schema();
        let mut s = frozen_store();
        s.add(
            &schema,
            draft(
                AnnotationKind::Comment,
                "U1",
                None,
                "(FVENTES/Remise , λ,λ)",
            ),
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""anchor":"(FVENTES/Remise, λ, λ)""#));
        assert!(text.contains(r#""createdAt":"2010-03-01T09:00:00Z""#));
        let back = AnnotationStore::load_jsonl(&schema, text.as_bytes()).unwrap();
        assert_eq!(back.get("A1"), s.get("A1"));
    }

    #[test]
    fn resolution_local_and_global() {
        let schema = sales_schema();
        let mut s = frozen_store();
        use AnnotationKind::*;
        s.add(
            &schema,
            draft(Comment, "U1", None, "(FVENTES/Remise, λ, λ)"),
        )
        .unwrap();
        s.add(&schema, draft(Question, "U1", None, A2)).unwrap();
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
        let on = |ctx: &AnalysisContext| -> Vec<String> {
            s.resolve(ctx, None).iter().map(|a| a.id.clone()).collect()
        };
        assert_eq!(on(&ca1), ["A1"]);
        assert_eq!(on(&ca2), ["A1", "A2"]);
        assert!(AnnotationStore::new().resolve(&ca2, None).is_empty());
    }
}
