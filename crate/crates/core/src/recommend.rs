//! OLAP operations as values, preference integration and alternative
//! recommendations.

use crate::annotation::{Annotation, AnnotationStore};
use crate::chain::describe;
use crate::context::{
    check_context, AnalysisContext, AxisSpec, ContextError, ContextId, ContextIds, MeasureRef,
    Navigator, PredicateSpec,
};
use crate::preference::{Preference, PreferenceElement, PreferenceStore, StructureRef};
use crate::schema::Hierarchy;
use crate::tree::to_tree;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRef {
    pub dim: String,
    pub hier: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OlapOperation {
    Display {
        fact: String,
        #[serde(with = "measure_list")]
        measures: Vec<MeasureRef>,
        axes: Vec<AxisRef>,
    },
    Drilldown {
        dim: String,
        param: String,
    },
    Rollup {
        dim: String,
        param: String,
    },
    Rotate {
        from: String,
        to: String,
        hier: String,
    },
    AddMeasure {
        #[serde(with = "measure_text")]
        measure: MeasureRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
    },
    Restrict {
        #[serde(with = "predicate_text")]
        predicate: PredicateSpec,
    },
}

mod measure_text {
    use crate::context::MeasureRef;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &MeasureRef, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(m)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<MeasureRef, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

mod measure_list {
    use crate::context::MeasureRef;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[MeasureRef], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ms.iter().map(ToString::to_string))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<MeasureRef>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| t.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

mod predicate_text {
    use crate::context::PredicateSpec;
    use crate::preference::PredicateItem;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &PredicateSpec, s: S) -> Result<S::Ok, S::Error> {
        p.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PredicateSpec, D::Error> {
        PredicateItem::deserialize(d)?
            .spec()
            .map_err(serde::de::Error::custom)
    }
}

/// Script syntax.
impl fmt::Display for OlapOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OlapOperation::Display {
                fact,
                measures,
                axes,
            } => {
                write!(f, "DISPLAY({fact}")?;
                for m in measures {
                    write!(f, ", {m}")?;
                }
                for a in axes {
                    write!(f, ", {}.{}", a.dim, a.hier)?;
                }
                f.write_str(")")
            }
            OlapOperation::Drilldown { dim, param } => write!(f, "DRILLDOWN({dim}, {param})"),
            OlapOperation::Rollup { dim, param } => write!(f, "ROLLUP({dim}, {param})"),
            OlapOperation::Rotate { from, to, hier } => write!(f, "ROTATE({from}, {to}.{hier})"),
            OlapOperation::AddMeasure { measure, position } => match position {
                Some(p) => write!(f, "ADDMEASURE({measure}, {p})"),
                None => write!(f, "ADDMEASURE({measure})"),
            },
            OlapOperation::Restrict { predicate } => write!(f, "RESTRICT({predicate})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OperationError {
    #[error("no context: the first operation must be a display")]
    NoContext,
    #[error(transparent)]
    Context(#[from] ContextError),
}

impl OlapOperation {
    /// Applies the operation; only `display` may start without a context.
    pub fn apply(
        &self,
        nav: &Navigator,
        ctx: Option<&AnalysisContext>,
    ) -> Result<AnalysisContext, OperationError> {
        if let OlapOperation::Display {
            fact,
            measures,
            axes,
        } = self
        {
            let axes: Vec<(String, String)> = axes
                .iter()
                .map(|a| (a.dim.clone(), a.hier.clone()))
                .collect();
            return Ok(nav.display(fact, measures, &axes)?);
        }
        let ctx = ctx.ok_or(OperationError::NoContext)?;
        Ok(match self {
            OlapOperation::Display { .. } => unreachable!(),
            OlapOperation::Drilldown { dim, param } => nav.drilldown(ctx, dim, param)?,
            OlapOperation::Rollup { dim, param } => nav.rollup(ctx, dim, param)?,
            OlapOperation::Rotate { from, to, hier } => nav.rotate(ctx, from, to, hier)?,
            OlapOperation::AddMeasure { measure, position } => nav.add_measure(
                ctx,
                measure.clone(),
                position.unwrap_or(ctx.measures().len()),
            )?,
            OlapOperation::Restrict { predicate } => nav.restrict(ctx, predicate)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrationError {
    #[error("preference {0} is not covered by the context")]
    NotCovered(String),
    #[error("preference {pref} does not apply: {reason}")]
    NotApplicable { pref: String, reason: String },
    #[error("preference {pref} yields an invalid context")]
    Invalid {
        pref: String,
        #[source]
        source: ContextError,
    },
}

/// `ctx ⊕ p`, minting the result's id from `ids`.
///
/// * measure order: listed measures first in preference order (keeping
///   the displayed aggregation, `SUM` otherwise), then the others;
/// * parameter order: the dimension's axis shows the listed parameters,
///   most preferred outermost; an undisplayed dimension replaces the most
///   recently modified axis first;
/// * value order: the top predicate is added as a restriction;
/// * fact, dimension or hierarchy order: the top element replaces the
///   subject, the most recently modified axis or that axis' hierarchy.
pub fn integrate(
    nav: &Navigator,
    ctx: &AnalysisContext,
    pref: &Preference,
) -> Result<AnalysisContext, IntegrationError> {
    if !crate::preference::covers(&pref.context, ctx) {
        return Err(IntegrationError::NotCovered(pref.id.clone()));
    }
    let schema = nav.schema();
    let not_applicable = |reason: String| IntegrationError::NotApplicable {
        pref: pref.id.clone(),
        reason,
    };
    let mut next = ctx.clone();
    let structures: Vec<&StructureRef> = pref
        .order
        .iter()
        .filter_map(|e| match e {
            PreferenceElement::Structure(s) => Some(s),
            PreferenceElement::Predicate(_) => None,
        })
        .collect();
    match (pref.order.first(), structures.first()) {
        (Some(PreferenceElement::Predicate(p)), _) => {
            let typed = nav
                .type_predicate(&ctx.fact, &p.to_spec())
                .map_err(|e| not_applicable(e.to_string()))?;
            next.restrictions.insert(typed);
        }
        (_, Some(StructureRef::Measure { fact, .. })) => {
            if *fact != ctx.fact {
                return Err(not_applicable(format!(
                    "subject is {}, not {fact}",
                    ctx.fact
                )));
            }
            let mut measures = Vec::new();
            for s in &structures {
                let StructureRef::Measure { measure, .. } = s else {
                    unreachable!()
                };
                let shown: Vec<&MeasureRef> = ctx
                    .measures
                    .iter()
                    .filter(|m| &m.measure == measure)
                    .collect();
                if shown.is_empty() {
                    measures.push(MeasureRef::sum(measure.as_str()));
                } else {
                    measures.extend(shown.into_iter().cloned());
                }
            }
            for m in &ctx.measures {
                if !measures.contains(m) {
                    measures.push(m.clone());
                }
            }
            next.measures = measures;
        }
        (_, Some(StructureRef::Parameter { dim, .. })) => {
            let listed: Vec<String> = structures
                .iter()
                .map(|s| match s {
                    StructureRef::Parameter { param, .. } => param.clone(),
                    _ => unreachable!(),
                })
                .collect();
            let d = schema
                .dimension(dim)
                .ok_or_else(|| not_applicable(format!("unknown {dim}")))?;
            let consistent = |h: &Hierarchy| {
                listed.iter().all(|p| h.contains(p))
                    && listed.windows(2).all(|w| h.precedes(&w[1], &w[0]))
            };
            let idx = match ctx.axes.iter().position(|a| &a.dim == dim) {
                Some(i) => i,
                None => {
                    if !schema.in_star(&ctx.fact, dim) {
                        return Err(not_applicable(format!(
                            "{dim} is not linked to {}",
                            ctx.fact
                        )));
                    }
                    ctx.focus_axis()
                }
            };
            let current = (ctx.axes[idx].dim == *dim)
                .then(|| d.hierarchy(&ctx.axes[idx].hier))
                .flatten()
                .filter(|h| consistent(h));
            let h = current
                .or_else(|| d.hierarchies.iter().find(|h| consistent(h)))
                .ok_or_else(|| {
                    not_applicable(format!("no hierarchy of {dim} orders {listed:?} this way"))
                })?;
            if ctx.axes[idx].dim != *dim {
                next.restrictions
                    .retain(|p| !p.on_attribute(&ctx.axes[idx].dim));
            }
            next.axes[idx] = AxisSpec::with_params(dim, h, listed);
            next.focus = idx;
        }
        (_, Some(StructureRef::Fact(fact))) => {
            let f = schema
                .fact(fact)
                .ok_or_else(|| not_applicable(format!("unknown {fact}")))?;
            let mut measures: Vec<MeasureRef> = ctx
                .measures
                .iter()
                .filter(|m| f.measure(&m.measure).is_some())
                .cloned()
                .collect();
            if measures.is_empty() {
                let first = f
                    .measures
                    .first()
                    .ok_or_else(|| not_applicable(format!("{fact} has no measure")))?;
                measures.push(MeasureRef::sum(first.name.as_str()));
            }
            next.fact = fact.clone();
            next.measures = measures;
        }
        (_, Some(StructureRef::Dimension(dim))) => {
            let idx = ctx.focus_axis();
            if ctx.axes.iter().any(|a| &a.dim == dim) {
                return Err(not_applicable(format!("{dim} is already displayed")));
            }
            let h = schema
                .dimension(dim)
                .and_then(|d| d.hierarchies.first())
                .ok_or_else(|| not_applicable(format!("{dim} has no hierarchy")))?;
            next.restrictions
                .retain(|p| !p.on_attribute(&ctx.axes[idx].dim));
            next.axes[idx] = AxisSpec::with_params(dim, h, vec![h.coarsest().to_string()]);
            next.focus = idx;
        }
        (_, Some(StructureRef::Hierarchy { dim, hier })) => {
            let h = schema
                .dimension(dim)
                .and_then(|d| d.hierarchy(hier))
                .ok_or_else(|| not_applicable(format!("unknown {dim}.{hier}")))?;
            let idx = match ctx.axes.iter().position(|a| &a.dim == dim) {
                Some(i) => i,
                None => {
                    let i = ctx.focus_axis();
                    next.restrictions
                        .retain(|p| !p.on_attribute(&ctx.axes[i].dim));
                    i
                }
            };
            next.axes[idx] = AxisSpec::with_params(dim, h, vec![h.coarsest().to_string()]);
            next.focus = idx;
        }
        (_, None) => return Err(not_applicable("empty order".into())),
    }
    check_context(schema, &next).map_err(|source| IntegrationError::Invalid {
        pref: pref.id.clone(),
        source,
    })?;
    next.id = nav.ids().next_id();
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub context: AnalysisContext,
    /// Source preferences in id order; more than one when integrations coincide.
    pub preferences: Vec<String>,
    pub annotations: Vec<Annotation>,
    pub origin: ContextId,
}

impl Recommendation {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "context": self.context.to_json(),
            "tree": to_tree(&self.context).to_json(),
            "preference": self.preferences.first(),
            "preferences": self.preferences,
            "annotations": self.annotations.iter().map(Annotation::to_json).collect::<Vec<_>>(),
        })
    }
}

pub fn recommendations_json(
    origin: &AnalysisContext,
    recs: &[Recommendation],
) -> serde_json::Value {
    serde_json::json!({
        "origin": origin.id(),
        "items": recs.iter().map(Recommendation::to_json).collect::<Vec<_>>(),
    })
}

/// Alternatives to `ctx`: one per covered preference of `owner`, skipping
/// integrations that fail or leave the tree unchanged, merging identical
/// results. Recommended contexts are named `<origin>_K<n>` and leave the
/// navigation counter untouched.
pub fn recommend_from(
    nav: &Navigator,
    ctx: &AnalysisContext,
    owner: &str,
    prefs: &PreferenceStore,
    annotations: &AnnotationStore,
) -> Vec<Recommendation> {
    let scratch = ContextIds::default();
    let scratch_nav = Navigator::new(nav.schema(), &scratch);
    let base = to_tree(ctx);
    let mut out: Vec<(crate::tree::ContextTree, Recommendation)> = Vec::new();
    for pref in prefs.candidates(owner, ctx) {
        let next = match integrate(&scratch_nav, ctx, pref) {
            Ok(next) => next,
            Err(e) => {
                log::debug!("skipping {}: {}", pref.id, describe(&e));
                continue;
            }
        };
        let tree = to_tree(&next);
        if tree == base {
            continue;
        }
        if let Some((_, rec)) = out.iter_mut().find(|(t, _)| *t == tree) {
            rec.preferences.push(pref.id.clone());
            continue;
        }
        out.push((
            tree,
            Recommendation {
                context: next,
                preferences: vec![pref.id.clone()],
                annotations: Vec::new(),
                origin: ctx.id().clone(),
            },
        ));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, (_, mut rec))| {
            rec.context.id = ContextId(format!("{}_K{}", ctx.id(), i + 1));
            rec.annotations = annotations
                .resolve(&rec.context, None)
                .into_iter()
                .cloned()
                .collect();
            rec
        })
        .collect()
}

/// Applies `op` then recommends alternatives to the resulting context.
pub fn recommend(
    nav: &Navigator,
    ctx: Option<&AnalysisContext>,
    op: &OlapOperation,
    owner: &str,
    prefs: &PreferenceStore,
    annotations: &AnnotationStore,
) -> Result<(AnalysisContext, Vec<Recommendation>), OperationError> {
    let next = op.apply(nav, ctx)?;
    let recs = recommend_from(nav, &next, owner, prefs, annotations);
    Ok((next, recs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AnnotationStore;
    use crate::fixtures::sales_schema;
    use crate::preference::PreferenceDoc;

    fn store(docs: &[&str]) -> PreferenceStore {
        let schema = sales_schema();
        let mut s = PreferenceStore::new();
        for d in docs {
            s.add(&schema, &serde_json::from_str::<PreferenceDoc>(d).unwrap())
                .unwrap();
        }
        s
    }

    const P1: &str =
        r#"{"owner":"U1","kind":"structure","order":["DPRODUITS.GAMME","DPRODUITS.CODEP"]}"#;
    const P2: &str = r#"{"owner":"U1","kind":"structure","order":["FVENTES/MONTANT","FVENTES/REMISE"],"context":{"fact":"FVENTES"}}"#;
    const P3: &str = r#"{"owner":"U1","kind":"value","order":["DCLIENTS.REGION = 'M-Pyrenees'"],"context":{"axes":[{"dim":"DCLIENTS"}]}}"#;

    fn ops() -> Vec<OlapOperation> {
        serde_json::from_str(
            r#"[
            {"op":"display","fact":"FVENTES","measures":["SUM(REMISE)"],
             "axes":[{"dim":"DCLIENTS","hier":"HGEOFR"},{"dim":"DTEMPS","hier":"HTEMPS"}]},
            {"op":"drilldown","dim":"DCLIENTS","param":"NDEPT"},
            {"op":"rotate","from":"DCLIENTS","to":"DPRODUITS","hier":"HPROD"}
        ]"#,
        )
        .unwrap()
    }

    #[test]
    fn scenario_yields_two_alternatives() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let prefs = store(&[P1, P2, P3]);
        let annos = AnnotationStore::new();
        let mut ctx: Option<AnalysisContext> = None;
        let mut recs = Vec::new();
        for op in ops() {
            let (next, r) = recommend(&nav, ctx.as_ref(), &op, "U1", &prefs, &annos).unwrap();
            ctx = Some(next);
            recs = r;
        }
        let ca3 = ctx.unwrap();
        assert_eq!(ca3.id(), "CA3");
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].preferences, ["P1"]);
        assert_eq!(
            recs[0].context.axis("DPRODUITS").unwrap().params,
            ["GAMME", "CODEP"]
        );
        assert_eq!(recs[1].preferences, ["P2"]);
        let ms: Vec<String> = recs[1]
            .context
            .measures()
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(ms, ["SUM(MONTANT)", "SUM(REMISE)"]);
        assert!(recs.iter().all(|r| r.origin == *ca3.id()));
        assert_eq!(recs[1].context.id(), "CA3_K2");
        assert_eq!(ids.peek(), 4);
    }

    #[test]
    fn no_op_integration_is_discarded() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let prefs = store(&[P2]);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("MONTANT"), MeasureRef::sum("REMISE")],
                &[("DTEMPS".into(), "HTEMPS".into())],
            )
            .unwrap();
        let recs = recommend_from(&nav, &ctx, "U1", &prefs, &AnnotationStore::new());
        assert!(recs.is_empty());
        let recs = recommend_from(
            &nav,
            &ctx,
            "U1",
            &PreferenceStore::new(),
            &AnnotationStore::new(),
        );
        assert!(recs.is_empty());
    }

    #[test]
    fn identical_results_merge() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let twin = P2.replace(r#""context":{"fact":"FVENTES"}"#, r#""context":{}"#);
        let prefs = store(&[P2, &twin]);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[("DTEMPS".into(), "HTEMPS".into())],
            )
            .unwrap();
        let recs = recommend_from(&nav, &ctx, "U1", &prefs, &AnnotationStore::new());
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].preferences, ["P1", "P2"]);
    }

    #[test]
    fn parameter_order_rotates_when_dimension_hidden() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let prefs = store(&[P1]);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[
                    ("DCLIENTS".into(), "HGEOFR".into()),
                    ("DTEMPS".into(), "HTEMPS".into()),
                ],
            )
            .unwrap();
        let ctx = nav
            .restrict(&ctx, &PredicateSpec::parse("DTEMPS.ANNEE = 2009").unwrap())
            .unwrap();
        let next = integrate(&nav, &ctx, prefs.get("P1").unwrap()).unwrap();
        assert_eq!(next.axes()[1].dim, "DPRODUITS");
        assert_eq!(next.axes()[1].params, ["GAMME", "CODEP"]);
        assert!(next.restrictions().is_empty());
        assert_eq!(next.axes()[0].dim, "DCLIENTS");
    }

    #[test]
    fn inconsistent_parameter_order_is_skipped() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let prefs = store(&[
            r#"{"owner":"U1","kind":"structure","order":["DPRODUITS.CODEP","DPRODUITS.GAMME"]}"#,
        ]);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[("DPRODUITS".into(), "HPROD".into())],
            )
            .unwrap();
        assert!(matches!(
            integrate(&nav, &ctx, prefs.get("P1").unwrap()),
            Err(IntegrationError::NotApplicable { .. })
        ));
        assert!(recommend_from(&nav, &ctx, "U1", &prefs, &AnnotationStore::new()).is_empty());
    }

    #[test]
    fn value_preference_restricts() {
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let prefs = store(&[P3]);
        let ctx = nav
            .display(
                "FVENTES",
                &[MeasureRef::sum("REMISE")],
                &[("DCLIENTS".into(), "HGEOFR".into())],
            )
            .unwrap();
        let recs = recommend_from(&nav, &ctx, "U1", &prefs, &AnnotationStore::new());
        assert_eq!(recs.len(), 1);
        assert_eq!(
            recs[0]
                .context
                .restrictions()
                .iter()
                .next()
                .unwrap()
                .to_string(),
            "DCLIENTS.REGION = 'M-Pyrenees'"
        );
    }

    #[test]
    fn operation_json_and_script_text() {
        let ops = ops();
        assert_eq!(
            ops[0].to_string(),
            "DISPLAY(FVENTES, SUM(REMISE), DCLIENTS.HGEOFR, DTEMPS.HTEMPS)"
        );
        assert_eq!(ops[2].to_string(), "ROTATE(DCLIENTS, DPRODUITS.HPROD)");
        let r: OlapOperation =
            serde_json::from_str(r#"{"op":"restrict","predicate":"DTEMPS.ANNEE = 2009"}"#).unwrap();
        assert_eq!(r.to_string(), "RESTRICT(DTEMPS.ANNEE = 2009)");
        let back: OlapOperation =
            serde_json::from_value(serde_json::to_value(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let schema = sales_schema();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        assert_eq!(ops[1].apply(&nav, None), Err(OperationError::NoContext));
    }
}
