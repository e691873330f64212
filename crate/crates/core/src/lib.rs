//! Personalized OLAP analysis over a constellation schema, with
//! annotations anchored on analysis results and user preferences turned
//! into recommended next steps.

pub mod anchor;
pub mod annotation;
mod chain;
pub mod context;
pub mod cube;
mod ids;
mod lex;
pub mod preference;
pub mod recommend;
pub mod schema;
pub mod script;
pub mod session;
pub mod tree;
pub mod value;

pub use anchor::{parse_anchor, Anchor, AnchorError, Concept, ResolvedAnchor};
pub use annotation::{
    Annotation, AnnotationDraft, AnnotationError, AnnotationKind, AnnotationStore,
};
pub use chain::describe;
pub use context::{
    AggFn, AnalysisContext, AxisSpec, Comparator, ContextError, ContextId, ContextIds, MeasureRef,
    Navigator, Operand, Predicate, PredicateSpec, PredicateTarget, RestrictionPredicate,
};
pub use cube::{
    evaluate, Cell, DataError, Dataset, DimensionData, FactData, HeaderCell, HeaderTuple,
    MultidimensionalTable, RollUpConflict,
};
pub use ids::natural_cmp;
pub use lex::SyntaxError;
pub use preference::{
    covers, tree_covers, PredicateItem, Preference, PreferenceAxis, PreferenceContext,
    PreferenceContextDoc, PreferenceDoc, PreferenceElement, PreferenceError, PreferenceKind,
    PreferenceStore, StructureRef,
};
pub use recommend::{
    integrate, recommend, recommend_from, AxisRef, IntegrationError, OlapOperation, OperationError,
    Recommendation,
};
pub use schema::{
    Attribute, Constellation, Dimension, Fact, Finding, Hierarchy, Measure, Rule, SchemaError,
};
pub use script::{Script, ScriptError, ScriptStep};
pub use session::{
    run_script, Engine, Environment, HistoryEntry, LoadError, Session, SessionError, StepFailure,
    StepOutcome,
};
pub use tree::{to_tree, tree_edges, ContextTree, Edge, Label, NodeKind, TreeNode};
pub use value::{Literal, Value, ValueKind};

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::cube::Dataset;
    use crate::schema::Constellation;

    pub const SALES_SCHEMA: &str = include_str!("../../../fixtures/sales.schema.json");

    pub fn sales_schema() -> Constellation {
        Constellation::from_json(SALES_SCHEMA).unwrap()
    }

    pub fn sales_data() -> Dataset {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/data");
        Dataset::load_dir(&sales_schema(), dir).unwrap()
    }

    pub fn minimal_schema() -> Constellation {
        Constellation::from_json(
            r#"{
              "facts": [{"name": "F", "measures": [{"name": "M", "kind": "integer"}]}],
              "dimensions": [{
                "name": "D", "id": "K",
                "attributes": [{"name": "K", "kind": "string"}],
                "hierarchies": [{"name": "H", "params": ["K"]}]
              }],
              "star": {"F": ["D"]}
            }"#,
        )
        .unwrap()
    }
}
