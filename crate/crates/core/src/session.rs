//! Navigation sessions: the operation/recommendation loop over loaded data,
//! shared by the service and the batch replay.

use crate::annotation::{Annotation, AnnotationError, AnnotationStore};
use crate::context::{AnalysisContext, ContextId, ContextIds, Navigator};
use crate::cube::{evaluate, DataError, Dataset, MultidimensionalTable};
use crate::preference::{PreferenceError, PreferenceStore};
use crate::recommend::{
    recommend, recommend_from, recommendations_json, OlapOperation, OperationError, Recommendation,
};
use crate::schema::{Constellation, SchemaError};
use crate::script::{Script, ScriptStep};
use crate::tree::to_tree;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

/// Borrowed view of everything an operation reads.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub schema: &'a Constellation,
    pub data: &'a Dataset,
    pub preferences: &'a PreferenceStore,
    pub annotations: &'a AnnotationStore,
}

/// Owned schema, data and stores.
#[derive(Debug)]
pub struct Environment {
    pub schema: Constellation,
    pub data: Dataset,
    pub preferences: PreferenceStore,
    pub annotations: AnnotationStore,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot load schema")]
    Schema(#[from] SchemaError),
    #[error("cannot load data")]
    Data(#[from] DataError),
    #[error("cannot load preferences {path}")]
    Preferences {
        path: String,
        #[source]
        source: PreferenceError,
    },
    #[error("cannot load annotations {path}")]
    Annotations {
        path: String,
        #[source]
        source: AnnotationError,
    },
}

impl Environment {
    /// Loads and validates the schema, then the data directory and the
    /// optional store files.
    pub fn load(
        schema: &Path,
        data_dir: &Path,
        preferences: Option<&Path>,
        annotations: Option<&Path>,
    ) -> Result<Self, LoadError> {
        let schema = Constellation::load(schema)?;
        let findings = schema.validate();
        if !findings.is_empty() {
            return Err(SchemaError::Invalid(findings).into());
        }
        let data = Dataset::load_dir(&schema, data_dir)?;
        let preferences = match preferences {
            Some(p) if p.exists() => {
                let wrap = |source| LoadError::Preferences {
                    path: p.display().to_string(),
                    source,
                };
                let f = File::open(p).map_err(|e| wrap(e.into()))?;
                PreferenceStore::load_jsonl(&schema, BufReader::new(f)).map_err(wrap)?
            }
            _ => PreferenceStore::new(),
        };
        let annotations = match annotations {
            Some(p) if p.exists() => {
                let wrap = |source| LoadError::Annotations {
                    path: p.display().to_string(),
                    source,
                };
                let f = File::open(p).map_err(|e| wrap(e.into()))?;
                AnnotationStore::load_jsonl(&schema, BufReader::new(f)).map_err(wrap)?
            }
            _ => AnnotationStore::new(),
        };
        Ok(Environment {
            schema,
            data,
            preferences,
            annotations,
        })
    }

    pub fn engine(&self) -> Engine<'_> {
        Engine {
            schema: &self.schema,
            data: &self.data,
            preferences: &self.preferences,
            annotations: &self.annotations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryEntry {
    Operation {
        operation: OlapOperation,
        context: ContextId,
    },
    /// Adoption of recommendation `index` (0-based) of the previous step.
    Adopt {
        index: usize,
        preferences: Vec<String>,
        context: ContextId,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Operation(#[from] OperationError),
    #[error("evaluation failed")]
    Data(#[from] DataError),
    #[error("stale step token {given}, current is {current}")]
    StaleToken { given: u64, current: u64 },
    #[error("no recommendation {index} (the last step returned {len})")]
    NoRecommendation { index: usize, len: usize },
}

/// Result of one step, as returned to clients.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub context: AnalysisContext,
    pub table: MultidimensionalTable,
    pub recommendations: Vec<Recommendation>,
    pub annotations: Vec<Annotation>,
    pub step_token: u64,
}

impl StepOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "context": self.context.to_json(),
            "tree": to_tree(&self.context).to_json(),
            "table": self.table.to_json(),
            "recommendations": recommendations_json(&self.context, &self.recommendations),
            "annotations": self.annotations.iter().map(Annotation::to_json).collect::<Vec<_>>(),
            "stepToken": self.step_token,
        })
    }
}

#[derive(Debug)]
pub struct Session {
    id: String,
    user: String,
    ids: ContextIds,
    current: Option<AnalysisContext>,
    history: Vec<HistoryEntry>,
    recommendations: Vec<Recommendation>,
    step: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            user: user.into(),
            ids: ContextIds::default(),
            current: None,
            history: Vec::new(),
            recommendations: Vec::new(),
            step: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn current(&self) -> Option<&AnalysisContext> {
        self.current.as_ref()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn recommendations(&self) -> &[Recommendation] {
        &self.recommendations
    }

    pub fn step_token(&self) -> u64 {
        self.step
    }

    /// Applies an operation. On failure the session is left untouched and
    /// no context id is consumed.
    pub fn apply(
        &mut self,
        engine: Engine,
        op: &OlapOperation,
    ) -> Result<StepOutcome, SessionError> {
        let scratch = ContextIds::starting_at(self.ids.peek());
        let nav = Navigator::new(engine.schema, &scratch);
        let (ctx, recs) = recommend(
            &nav,
            self.current.as_ref(),
            op,
            &self.user,
            engine.preferences,
            engine.annotations,
        )?;
        let table = evaluate(engine.schema, &ctx, engine.data)?;
        self.ids.reset_to(scratch.peek());
        self.history.push(HistoryEntry::Operation {
            operation: op.clone(),
            context: ctx.id().clone(),
        });
        Ok(self.commit(engine, ctx, table, recs))
    }

    /// Adopts recommendation `index` of the last step; `token` must be the
    /// step token that step returned.
    pub fn accept(
        &mut self,
        engine: Engine,
        index: usize,
        token: u64,
    ) -> Result<StepOutcome, SessionError> {
        if token != self.step {
            return Err(SessionError::StaleToken {
                given: token,
                current: self.step,
            });
        }
        let rec = self
            .recommendations
            .get(index)
            .ok_or(SessionError::NoRecommendation {
                index,
                len: self.recommendations.len(),
            })?
            .clone();
        let scratch = ContextIds::starting_at(self.ids.peek());
        let nav = Navigator::new(engine.schema, &scratch);
        let mut adopted = rec.context;
        adopted.id = scratch.next_id();
        let recs = recommend_from(
            &nav,
            &adopted,
            &self.user,
            engine.preferences,
            engine.annotations,
        );
        let table = evaluate(engine.schema, &adopted, engine.data)?;
        self.ids.reset_to(scratch.peek());
        self.history.push(HistoryEntry::Adopt {
            index,
            preferences: rec.preferences,
            context: adopted.id().clone(),
        });
        Ok(self.commit(engine, adopted, table, recs))
    }

    fn commit(
        &mut self,
        engine: Engine,
        ctx: AnalysisContext,
        table: MultidimensionalTable,
        recs: Vec<Recommendation>,
    ) -> StepOutcome {
        let annotations = engine
            .annotations
            .resolve(&ctx, Some(&table))
            .into_iter()
            .cloned()
            .collect();
        self.step += 1;
        self.current = Some(ctx.clone());
        self.recommendations = recs.clone();
        StepOutcome {
            context: ctx,
            table,
            recommendations: recs,
            annotations,
            step_token: self.step,
        }
    }

    /// Rebuilds a session by replaying a recorded history.
    pub fn replay(
        engine: Engine,
        id: impl Into<String>,
        user: impl Into<String>,
        history: &[HistoryEntry],
    ) -> Result<Self, SessionError> {
        let mut s = Session::new(id, user);
        for entry in history {
            match entry {
                HistoryEntry::Operation { operation, .. } => {
                    s.apply(engine, operation)?;
                }
                HistoryEntry::Adopt { index, .. } => {
                    let token = s.step;
                    s.accept(engine, *index, token)?;
                }
            }
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "user": self.user,
            "history": self.history,
        })
    }
}

/// A failed script step, 1-based, with its source line.
#[derive(Debug, thiserror::Error)]
#[error("step {step} (line {line}) failed")]
pub struct StepFailure {
    pub step: usize,
    pub line: usize,
    #[source]
    pub source: SessionError,
}

/// Runs every step of a script in a fresh session.
pub fn run_script(
    engine: Engine,
    user: &str,
    script: &Script,
) -> Result<Vec<(ScriptStep, StepOutcome)>, StepFailure> {
    let mut session = Session::new("replay", user);
    let mut out = Vec::new();
    for (i, (line, step)) in script.steps.iter().enumerate() {
        let result = match step {
            ScriptStep::Operation(op) => session.apply(engine, op),
            ScriptStep::Accept(n) => session.accept(engine, n - 1, session.step_token()),
        };
        let outcome = result.map_err(|source| StepFailure {
            step: i + 1,
            line: *line,
            source,
        })?;
        out.push((step.clone(), outcome));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sales_data, sales_schema};
    use crate::recommend::AxisRef;

    fn display() -> OlapOperation {
        OlapOperation::Display {
            fact: "FVENTES".into(),
            measures: vec!["SUM(REMISE)".parse().unwrap()],
            axes: vec![
                AxisRef {
                    dim: "DCLIENTS".into(),
                    hier: "HGEOFR".into(),
                },
                AxisRef {
                    dim: "DTEMPS".into(),
                    hier: "HTEMPS".into(),
                },
            ],
        }
    }

    #[test]
    fn failed_operations_leave_the_session_alone() {
        let schema = sales_schema();
        let data = sales_data();
        let prefs = PreferenceStore::new();
        let annos = AnnotationStore::new();
        let engine = Engine {
            schema: &schema,
            data: &data,
            preferences: &prefs,
            annotations: &annos,
        };
        let mut s = Session::new("s1", "U1");
        let drill = OlapOperation::Drilldown {
            dim: "DCLIENTS".into(),
            param: "NDEPT".into(),
        };
        assert!(matches!(
            s.apply(engine, &drill),
            Err(SessionError::Operation(OperationError::NoContext))
        ));
        let first = s.apply(engine, &display()).unwrap();
        assert_eq!(first.context.id(), "CA1");
        let bad = OlapOperation::Drilldown {
            dim: "DCLIENTS".into(),
            param: "ETAT".into(),
        };
        assert!(s.apply(engine, &bad).is_err());
        assert_eq!(s.history().len(), 1);
        assert_eq!(s.step_token(), 1);
        let next = s.apply(engine, &drill).unwrap();
        assert_eq!(next.context.id(), "CA2");
        assert!(matches!(
            s.accept(engine, 0, 1),
            Err(SessionError::StaleToken { .. })
        ));
        assert!(matches!(
            s.accept(engine, 5, 2),
            Err(SessionError::NoRecommendation { index: 5, len: 0 })
        ));
    }

    #[test]
    fn rollup_to_the_displayed_level_is_recorded() {
        let schema = sales_schema();
        let data = sales_data();
        let prefs = PreferenceStore::new();
        let annos = AnnotationStore::new();
        let engine = Engine {
            schema: &schema,
            data: &data,
            preferences: &prefs,
            annotations: &annos,
        };
        let mut s = Session::new("s1", "U1");
        let a = s.apply(engine, &display()).unwrap();
        let b = s
            .apply(
                engine,
                &OlapOperation::Rollup {
                    dim: "DCLIENTS".into(),
                    param: "REGION".into(),
                },
            )
            .unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(s.history().len(), 2);
        let again = Session::replay(engine, "s2", "U1", s.history()).unwrap();
        assert_eq!(
            to_tree(again.current().unwrap()),
            to_tree(s.current().unwrap())
        );
    }
}
