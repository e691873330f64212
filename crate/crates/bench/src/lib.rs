//! Shared setup for the benchmarks.

use annolap_core::{AnalysisContext, ContextIds, Environment, MeasureRef, Navigator};
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Schema, data and stores from the fixture directory.
pub fn environment() -> Environment {
    let f = fixtures();
    Environment::load(
        &f.join("sales.schema.json"),
        &f.join("data"),
        Some(&f.join("preferences.jsonl")),
        Some(&f.join("annotations.jsonl")),
    )
    .expect("fixtures load")
}

/// Discounts by department and year.
pub fn department_context(env: &Environment, ids: &ContextIds) -> AnalysisContext {
    let nav = Navigator::new(&env.schema, ids);
    let axes = [
        ("DCLIENTS".to_string(), "HGEOFR".to_string()),
        ("DTEMPS".to_string(), "HTEMPS".to_string()),
    ];
    let ctx = nav
        .display("FVENTES", &[MeasureRef::sum("REMISE")], &axes)
        .expect("display");
    nav.drilldown(&ctx, "DCLIENTS", "NDEPT").expect("drilldown")
}
