//! Dimension and fact instance data loaded from CSV, and evaluation of an
//! analysis context into a multidimensional table.

use crate::context::{AggFn, AnalysisContext, AxisSpec, MeasureRef, PredicateTarget};
use crate::schema::{Constellation, Dimension};
use crate::value::{Value, ValueKind};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

/// One finer value mapped to two coarser values in a dimension table.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error(
    "{file}: row {row}: roll-up dependency violated in {hierarchy}: \
     {finer}='{finer_value}' maps to {coarser}='{first}' and '{second}'"
)]
pub struct RollUpConflict {
    pub file: String,
    pub row: u64,
    pub hierarchy: String,
    pub finer: String,
    pub finer_value: String,
    pub coarser: String,
    pub first: String,
    pub second: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{file}: malformed CSV")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: cannot read")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown dimension '{0}'")]
    UnknownDimension(String),
    #[error("unknown fact '{0}'")]
    UnknownFact(String),
    #[error("{file}: missing column '{column}'")]
    MissingColumn { file: String, column: String },
    #[error("{file}: unexpected column '{column}'")]
    UnexpectedColumn { file: String, column: String },
    #[error("{file}: row {row}, column {column}: cannot read '{text}' as {kind}")]
    Coercion {
        file: String,
        row: u64,
        column: String,
        text: String,
        kind: ValueKind,
    },
    #[error("{file}: row {row}: duplicate id '{id}'")]
    DuplicateId { file: String, row: u64, id: String },
    #[error("{0}")]
    RollUp(Box<RollUpConflict>),
    #[error("{file}: row {row}: {column}='{value}' does not resolve in {dimension}")]
    DanglingKey {
        file: String,
        row: u64,
        column: String,
        value: String,
        dimension: String,
    },
    #[error("no data loaded for {0}")]
    Missing(String),
}

/// Rows of one dimension, columns in schema attribute order.
#[derive(Debug, Clone)]
pub struct DimensionData {
    dimension: String,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
    by_id: HashMap<Value, usize>,
}

impl DimensionData {
    pub fn dimension(&self) -> &str {
        &self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, attr: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == attr)
    }

    pub fn value(&self, row: usize, attr: &str) -> Option<&Value> {
        self.column(attr).map(|c| &self.rows[row][c])
    }

    pub fn row_of(&self, id: &Value) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn load(
        schema: &Constellation,
        dim: &str,
        path: impl AsRef<Path>,
    ) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = path.display().to_string();
        let f = std::fs::File::open(path).map_err(|source| DataError::Io {
            file: file.clone(),
            source,
        })?;
        Self::from_reader(schema, dim, &file, f)
    }

    /// Reads a dimension CSV whose header names exactly the dimension's attributes.
    pub fn from_reader(
        schema: &Constellation,
        dim: &str,
        file: &str,
        reader: impl Read,
    ) -> Result<Self, DataError> {
        let d = schema
            .dimension(dim)
            .ok_or_else(|| DataError::UnknownDimension(dim.to_string()))?;
        let csv_err = |source| DataError::Csv {
            file: file.to_string(),
            source,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let columns: Vec<String> = d.attributes.iter().map(|a| a.name.clone()).collect();
        let positions = match_header(file, &header, &columns)?;
        let kinds: Vec<ValueKind> = d.attributes.iter().map(|a| a.kind).collect();
        let id_col = columns
            .iter()
            .position(|c| *c == d.id)
            .expect("validated schema");

        let mut data = DimensionData {
            dimension: dim.to_string(),
            columns,
            rows: Vec::new(),
            by_id: HashMap::new(),
        };
        let mut lines = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or_default();
            let mut row = Vec::with_capacity(kinds.len());
            for (i, kind) in kinds.iter().enumerate() {
                let text = &record[positions[i]];
                row.push(kind.parse_text(text).ok_or_else(|| DataError::Coercion {
                    file: file.to_string(),
                    row: line,
                    column: data.columns[i].clone(),
                    text: text.to_string(),
                    kind: *kind,
                })?);
            }
            if data
                .by_id
                .insert(row[id_col].clone(), data.rows.len())
                .is_some()
            {
                return Err(DataError::DuplicateId {
                    file: file.to_string(),
                    row: line,
                    id: row[id_col].to_string(),
                });
            }
            data.rows.push(row);
            lines.push(line);
        }
        data.check_dependencies(d, file, &lines)?;
        Ok(data)
    }

    /// Each finer level maps to exactly one value of every coarser level, and
    /// each parameter to one value of each of its weak attributes.
    fn check_dependencies(
        &self,
        d: &Dimension,
        file: &str,
        lines: &[u64],
    ) -> Result<(), DataError> {
        for h in &d.hierarchies {
            let mut pairs: Vec<(&str, &str)> = Vec::new();
            for (i, finer) in h.params.iter().enumerate() {
                for coarser in &h.params[i + 1..] {
                    pairs.push((finer, coarser));
                }
                for w in h.weak_of(finer) {
                    pairs.push((finer, w));
                }
            }
            for (finer, coarser) in pairs {
                let (fc, cc) = (self.column(finer).unwrap(), self.column(coarser).unwrap());
                let mut seen: HashMap<&Value, &Value> = HashMap::new();
                for (r, row) in self.rows.iter().enumerate() {
                    match seen.get(&row[fc]) {
                        Some(prev) if *prev != &row[cc] => {
                            return Err(DataError::RollUp(Box::new(RollUpConflict {
                                file: file.to_string(),
                                row: lines[r],
                                hierarchy: h.name.clone(),
                                finer: finer.to_string(),
                                finer_value: row[fc].to_string(),
                                coarser: coarser.to_string(),
                                first: prev.to_string(),
                                second: row[cc].to_string(),
                            })))
                        }
                        Some(_) => {}
                        None => {
                            seen.insert(&row[fc], &row[cc]);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn match_header(
    file: &str,
    header: &csv::StringRecord,
    expected: &[String],
) -> Result<Vec<usize>, DataError> {
    for h in header.iter() {
        if !expected.iter().any(|e| e == h) {
            return Err(DataError::UnexpectedColumn {
                file: file.to_string(),
                column: h.to_string(),
            });
        }
    }
    expected
        .iter()
        .map(|e| {
            header
                .iter()
                .position(|h| h == e)
                .ok_or_else(|| DataError::MissingColumn {
                    file: file.to_string(),
                    column: e.clone(),
                })
        })
        .collect()
}

/// Fact rows: one resolved dimension row per star dimension plus one value
/// per measure.
#[derive(Debug, Clone)]
pub struct FactData {
    fact: String,
    dims: Vec<String>,
    measures: Vec<String>,
    keys: Vec<Vec<usize>>,
    values: Vec<Vec<Decimal>>,
}

impl FactData {
    pub fn fact(&self) -> &str {
        &self.fact
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn load(
        schema: &Constellation,
        fact: &str,
        dims: &BTreeMap<String, DimensionData>,
        path: impl AsRef<Path>,
    ) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = path.display().to_string();
        let f = std::fs::File::open(path).map_err(|source| DataError::Io {
            file: file.clone(),
            source,
        })?;
        Self::from_reader(schema, fact, dims, &file, f)
    }

    /// Reads a fact CSV: one id column per star dimension, one column per measure.
    pub fn from_reader(
        schema: &Constellation,
        fact: &str,
        dims: &BTreeMap<String, DimensionData>,
        file: &str,
        reader: impl Read,
    ) -> Result<Self, DataError> {
        let f = schema
            .fact(fact)
            .ok_or_else(|| DataError::UnknownFact(fact.to_string()))?;
        let star: Vec<&Dimension> = schema
            .star(fact)
            .iter()
            .filter_map(|d| schema.dimension(d))
            .collect();
        let mut expected: Vec<String> = star.iter().map(|d| d.id.clone()).collect();
        expected.extend(f.measures.iter().map(|m| m.name.clone()));
        let csv_err = |source| DataError::Csv {
            file: file.to_string(),
            source,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let positions = match_header(file, &header, &expected)?;
        let dim_data: Vec<&DimensionData> = star
            .iter()
            .map(|d| {
                dims.get(&d.name)
                    .ok_or_else(|| DataError::Missing(d.name.clone()))
            })
            .collect::<Result<_, _>>()?;

        let mut data = FactData {
            fact: fact.to_string(),
            dims: star.iter().map(|d| d.name.clone()).collect(),
            measures: f.measures.iter().map(|m| m.name.clone()).collect(),
            keys: Vec::new(),
            values: Vec::new(),
        };
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or_default();
            let mut keys = Vec::with_capacity(star.len());
            for (i, d) in star.iter().enumerate() {
                let text = &record[positions[i]];
                let kind = d.attribute(&d.id).expect("validated schema").kind;
                let id = kind.parse_text(text).ok_or_else(|| DataError::Coercion {
                    file: file.to_string(),
                    row: line,
                    column: d.id.clone(),
                    text: text.to_string(),
                    kind,
                })?;
                keys.push(
                    dim_data[i]
                        .row_of(&id)
                        .ok_or_else(|| DataError::DanglingKey {
                            file: file.to_string(),
                            row: line,
                            column: d.id.clone(),
                            value: text.to_string(),
                            dimension: d.name.clone(),
                        })?,
                );
            }
            let mut values = Vec::with_capacity(f.measures.len());
            for (j, m) in f.measures.iter().enumerate() {
                let text = &record[positions[star.len() + j]];
                let v = m
                    .kind
                    .parse_text(text)
                    .and_then(|v| v.as_decimal())
                    .ok_or_else(|| DataError::Coercion {
                        file: file.to_string(),
                        row: line,
                        column: m.name.clone(),
                        text: text.to_string(),
                        kind: m.kind,
                    })?;
                values.push(v);
            }
            data.keys.push(keys);
            data.values.push(values);
        }
        Ok(data)
    }
}

/// All instance data of a constellation.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub dims: BTreeMap<String, DimensionData>,
    pub facts: BTreeMap<String, FactData>,
}

impl Dataset {
    /// Loads `<name lowercased>.csv` for every dimension and fact of the schema.
    pub fn load_dir(schema: &Constellation, dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let dir = dir.as_ref();
        let mut ds = Dataset::default();
        for d in &schema.dimensions {
            let path = dir.join(format!("{}.csv", d.name.to_lowercase()));
            ds.dims
                .insert(d.name.clone(), DimensionData::load(schema, &d.name, path)?);
        }
        for f in &schema.facts {
            let path = dir.join(format!("{}.csv", f.name.to_lowercase()));
            let data = FactData::load(schema, &f.name, &ds.dims, path)?;
            ds.facts.insert(f.name.clone(), data);
        }
        Ok(ds)
    }
}

/// One displayed header level: a parameter or weak attribute with its value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct HeaderCell {
    pub attr: String,
    pub value: Value,
}

pub type HeaderTuple = Vec<HeaderCell>;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub measure: usize,
    pub value: Decimal,
}

/// Aggregated cells indexed by row header, column header and measure.
/// Missing entries are empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MultidimensionalTable {
    pub row_headers: Vec<HeaderTuple>,
    pub col_headers: Vec<HeaderTuple>,
    pub measures: Vec<MeasureRef>,
    pub cells: Vec<Cell>,
}

impl MultidimensionalTable {
    pub fn cell(&self, row: usize, col: usize, measure: usize) -> Option<Decimal> {
        self.cells
            .iter()
            .find(|c| c.row == row && c.col == col && c.measure == measure)
            .map(|c| c.value)
    }

    pub fn row_index(&self, values: &[Value]) -> Option<usize> {
        find_header(&self.row_headers, values)
    }

    pub fn col_index(&self, values: &[Value]) -> Option<usize> {
        find_header(&self.col_headers, values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let headers = |hs: &[HeaderTuple]| serde_json::to_value(hs).expect("headers serialize");
        serde_json::json!({
            "rowHeaders": headers(&self.row_headers),
            "colHeaders": headers(&self.col_headers),
            "measures": self.measures.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "cells": self.cells.iter().map(|c| serde_json::json!({
                "r": c.row,
                "c": c.col,
                "m": c.measure,
                "v": c.value.to_f64(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Matches the parameter values of a header (weak attributes skipped when
/// fewer values than cells are given).
fn find_header(headers: &[HeaderTuple], values: &[Value]) -> Option<usize> {
    headers.iter().position(|h| {
        let all: Vec<&Value> = h.iter().map(|c| &c.value).collect();
        all.len() == values.len() && all.iter().zip(values).all(|(a, b)| *a == b)
    })
}

#[derive(Default, Clone)]
struct Acc {
    sum: Decimal,
    count: u64,
    min: Option<Decimal>,
    max: Option<Decimal>,
}

impl Acc {
    fn push(&mut self, v: Decimal) {
        self.sum += v;
        self.count += 1;
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }

    fn finish(&self, agg: AggFn) -> Option<Decimal> {
        match agg {
            AggFn::Count => Some(Decimal::from(self.count)),
            _ if self.count == 0 => None,
            AggFn::Sum => Some(self.sum),
            AggFn::Avg => Some(self.sum / Decimal::from(self.count)),
            AggFn::Min => self.min,
            AggFn::Max => self.max,
        }
    }
}

/// Per-axis header assignment of every dimension row.
struct AxisLayout {
    headers: Vec<HeaderTuple>,
    row_header: Vec<Option<usize>>,
}

fn layout_axis(ctx: &AnalysisContext, axis: &AxisSpec, data: &DimensionData) -> AxisLayout {
    let mut display: Vec<(&str, usize)> = Vec::new();
    for p in &axis.params {
        display.push((p, data.column(p).expect("validated context")));
        for w in axis.weak_of(p) {
            display.push((w, data.column(w).expect("validated context")));
        }
    }
    let filters = dimension_filters(ctx, &axis.dim, data);
    let tuples: Vec<Option<HeaderTuple>> = data
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            filters[r].then(|| {
                display
                    .iter()
                    .map(|(attr, col)| HeaderCell {
                        attr: attr.to_string(),
                        value: row[*col].clone(),
                    })
                    .collect()
            })
        })
        .collect();
    let mut headers: Vec<HeaderTuple> = tuples.iter().flatten().cloned().collect();
    headers.sort_by(|a, b| a.iter().map(|c| &c.value).cmp(b.iter().map(|c| &c.value)));
    headers.dedup();
    let index: HashMap<&HeaderTuple, usize> =
        headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let row_header = tuples
        .iter()
        .map(|t| t.as_ref().map(|t| index[t]))
        .collect();
    AxisLayout {
        headers,
        row_header,
    }
}

/// Which rows of a dimension satisfy every restriction on that dimension.
fn dimension_filters(ctx: &AnalysisContext, dim: &str, data: &DimensionData) -> Vec<bool> {
    let preds: Vec<_> = ctx
        .restrictions()
        .iter()
        .filter(|p| p.on_attribute(dim))
        .map(|p| {
            (
                p,
                data.column(p.target.property())
                    .expect("validated predicate"),
            )
        })
        .collect();
    data.rows
        .iter()
        .map(|row| preds.iter().all(|(p, col)| p.matches(&row[*col])))
        .collect()
}

/// Evaluates a context over the loaded data.
///
/// Fact rows are filtered by every restriction, grouped by the displayed
/// header tuple of each axis, then aggregated per displayed measure. Headers
/// are drawn from the dimension data (restricted), so empty groups yield
/// empty cells; `COUNT` reports 0 for them.
pub fn evaluate(
    schema: &Constellation,
    ctx: &AnalysisContext,
    data: &Dataset,
) -> Result<MultidimensionalTable, DataError> {
    let facts = data
        .facts
        .get(ctx.fact())
        .ok_or_else(|| DataError::Missing(ctx.fact().to_string()))?;
    let dim_data = |d: &str| {
        data.dims
            .get(d)
            .ok_or_else(|| DataError::Missing(d.to_string()))
    };

    let layouts: Vec<AxisLayout> = ctx
        .axes()
        .iter()
        .map(|ax| Ok(layout_axis(ctx, ax, dim_data(&ax.dim)?)))
        .collect::<Result<_, DataError>>()?;
    let axis_slots: Vec<usize> = ctx
        .axes()
        .iter()
        .map(|ax| {
            facts
                .dims
                .iter()
                .position(|d| *d == ax.dim)
                .expect("axis in star")
        })
        .collect();

    let mut slicers: Vec<(usize, Vec<bool>)> = Vec::new();
    for (slot, d) in facts.dims.iter().enumerate() {
        if ctx.axis(d).is_none() && ctx.restrictions().iter().any(|p| p.on_attribute(d)) {
            slicers.push((slot, dimension_filters(ctx, d, dim_data(d)?)));
        }
    }
    let measure_preds: Vec<_> = ctx
        .restrictions()
        .iter()
        .filter_map(|p| match &p.target {
            PredicateTarget::Measure { measure, .. } => {
                Some((p, facts.measures.iter().position(|m| m == measure)?))
            }
            _ => None,
        })
        .collect();
    let measure_cols: Vec<usize> = ctx
        .measures()
        .iter()
        .map(|m| {
            facts
                .measures
                .iter()
                .position(|n| *n == m.measure)
                .expect("validated measure")
        })
        .collect();

    let n_rows = layouts[0].headers.len();
    let n_cols = layouts.get(1).map_or(1, |l| l.headers.len());
    let mut accs: HashMap<(usize, usize), Vec<Acc>> = HashMap::new();
    'rows: for (keys, values) in facts.keys.iter().zip(&facts.values) {
        for (slot, pass) in &slicers {
            if !pass[keys[*slot]] {
                continue 'rows;
            }
        }
        for (p, col) in &measure_preds {
            if !p.matches(&Value::Dec(values[*col])) {
                continue 'rows;
            }
        }
        let Some(r) = layouts[0].row_header[keys[axis_slots[0]]] else {
            continue;
        };
        let c = match layouts.get(1) {
            Some(l) => match l.row_header[keys[axis_slots[1]]] {
                Some(c) => c,
                None => continue,
            },
            None => 0,
        };
        let cell = accs
            .entry((r, c))
            .or_insert_with(|| vec![Acc::default(); measure_cols.len()]);
        for (acc, col) in cell.iter_mut().zip(&measure_cols) {
            acc.push(values[*col]);
        }
    }

    let empty = vec![Acc::default(); measure_cols.len()];
    let mut cells = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            let group = accs.get(&(r, c)).unwrap_or(&empty);
            for (m, measure) in ctx.measures().iter().enumerate() {
                if let Some(value) = group[m].finish(measure.agg) {
                    cells.push(Cell {
                        row: r,
                        col: c,
                        measure: m,
                        value,
                    });
                }
            }
        }
    }
    let _ = schema;
    Ok(MultidimensionalTable {
        row_headers: layouts[0].headers.clone(),
        col_headers: layouts
            .get(1)
            .map_or_else(|| vec![Vec::new()], |l| l.headers.clone()),
        measures: ctx.measures().to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextIds, Navigator, PredicateSpec};
    use crate::fixtures::{sales_data, sales_schema};
    use std::str::FromStr;

    const CLIENTS_HEADER: &str = "CODEC,NOMC,VILLE,ETAT,NDEPT,NOMDEPT,REGION\n";

    #[test]
    fn fixture_loads() {
        let data = sales_data();
        assert_eq!(data.dims["DCLIENTS"].len(), 10);
        assert_eq!(data.dims["DPRODUITS"].len(), 8);
        assert_eq!(data.dims["DTEMPS"].len(), 30);
        assert_eq!(data.facts["FVENTES"].len(), 240);
        let p = &data.dims["DPRODUITS"];
        let row = p.row_of(&Value::Str("P08".into())).unwrap();
        assert_eq!(
            p.value(row, "LIBELLE"),
            Some(&Value::Str("Clavier, sans fil".into()))
        );
    }

    #[test]
    fn header_only_dimension_is_valid() {
        let d =
            DimensionData::from_reader(&sales_schema(), "DCLIENTS", "t", CLIENTS_HEADER.as_bytes())
                .unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn roll_up_violation_is_reported() {
        let csv = format!(
            "{CLIENTS_HEADER}C1,A,Toulouse,FR,31,Haute-Garonne,M-Pyrenees\n\
             C2,B,Toulouse,FR,31,Haute-Garonne,Aquitaine\n"
        );
        let err = DimensionData::from_reader(&sales_schema(), "DCLIENTS", "t", csv.as_bytes())
            .unwrap_err();
        match err {
            DataError::RollUp(c) => {
                assert_eq!(c.row, 3);
                assert_eq!(c.finer, "VILLE");
                assert_eq!(c.coarser, "REGION");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dimension_load_errors() {
        let schema = sales_schema();
        let missing = "CODEC,NOMC\nC1,A\n";
        assert!(matches!(
            DimensionData::from_reader(&schema, "DCLIENTS", "t", missing.as_bytes()),
            Err(DataError::MissingColumn { .. })
        ));
        let dup = format!("{CLIENTS_HEADER}C1,A,Toulouse,FR,31,HG,MP\nC1,B,Toulouse,FR,31,HG,MP\n");
        assert!(matches!(
            DimensionData::from_reader(&schema, "DCLIENTS", "t", dup.as_bytes()),
            Err(DataError::DuplicateId { row: 3, .. })
        ));
        let bad_date = "IdT,MOIS,ANNEE\n2009-13-01,2009-13,2009\n";
        match DimensionData::from_reader(&schema, "DTEMPS", "t", bad_date.as_bytes()) {
            Err(DataError::Coercion { row, column, .. }) => {
                assert_eq!((row, column.as_str()), (2, "IdT"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fact_load_errors() {
        let schema = sales_schema();
        let data = sales_data();
        let dangling = "CODEC,CODEP,IdT,REMISE,MONTANT\nC99,P01,2009-01-05,1.00,10.00\n";
        match FactData::from_reader(&schema, "FVENTES", &data.dims, "f", dangling.as_bytes()) {
            Err(DataError::DanglingKey { row, column, .. }) => {
                assert_eq!((row, column.as_str()), (2, "CODEC"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let nan = "CODEC,CODEP,IdT,REMISE,MONTANT\nC01,P01,2009-01-05,abc,10.00\n";
        assert!(matches!(
            FactData::from_reader(&schema, "FVENTES", &data.dims, "f", nan.as_bytes()),
            Err(DataError::Coercion { .. })
        ));
        let empty = "CODEC,CODEP,IdT,REMISE,MONTANT\n";
        let f =
            FactData::from_reader(&schema, "FVENTES", &data.dims, "f", empty.as_bytes()).unwrap();
        assert!(f.is_empty());
    }

    fn ca1(nav: &Navigator) -> AnalysisContext {
        nav.display(
            "FVENTES",
            &[MeasureRef::sum("REMISE")],
            &[
                ("DCLIENTS".into(), "HGEOFR".into()),
                ("DTEMPS".into(), "HTEMPS".into()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ca1_cells_match_frozen_values() {
        // Values computed once from fixtures/data/fventes.csv with an
        // independent script (grouping on REGION x ANNEE).
        let schema = sales_schema();
        let data = sales_data();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let t = evaluate(&schema, &ca1(&nav), &data).unwrap();
        assert_eq!(t.row_headers.len(), 5);
        assert_eq!(t.col_headers.len(), 3);
        let r = t.row_index(&[Value::Str("M-Pyrenees".into())]).unwrap();
        let c = t.col_index(&[Value::Int(2009)]).unwrap();
        assert_eq!(
            t.cell(r, c, 0),
            Some(Decimal::from_str(MP_2009_REMISE).unwrap())
        );
        let total: Decimal = t.cells.iter().map(|c| c.value).sum();
        assert_eq!(total, Decimal::from_str(TOTAL_REMISE).unwrap());
    }

    const MP_2009_REMISE: &str = "5097.58";
    const TOTAL_REMISE: &str = "23410.44";

    #[test]
    fn empty_facts_give_headers_and_empty_cells() {
        let schema = sales_schema();
        let mut data = sales_data();
        let empty = "CODEC,CODEP,IdT,REMISE,MONTANT\n";
        let f =
            FactData::from_reader(&schema, "FVENTES", &data.dims, "f", empty.as_bytes()).unwrap();
        data.facts.insert("FVENTES".into(), f);
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ctx = nav
            .add_measure(&ca1(&nav), MeasureRef::new(AggFn::Count, "REMISE"), 1)
            .unwrap();
        let t = evaluate(&schema, &ctx, &data).unwrap();
        assert_eq!(t.row_headers.len(), 5);
        assert_eq!(t.col_headers.len(), 3);
        assert!(t.cells.iter().all(|c| c.measure == 1 && c.value.is_zero()));
        assert_eq!(t.cells.len(), 15);
    }

    #[test]
    fn restriction_keeps_only_matching_headers() {
        let schema = sales_schema();
        let data = sales_data();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ctx = nav
            .restrict(
                &ca1(&nav),
                &PredicateSpec::parse("DTEMPS.ANNEE = 2009").unwrap(),
            )
            .unwrap();
        let t = evaluate(&schema, &ctx, &data).unwrap();
        assert_eq!(t.col_headers.len(), 1);
        assert_eq!(t.col_headers[0][0].value, Value::Int(2009));
        let r = t.row_index(&[Value::Str("M-Pyrenees".into())]).unwrap();
        assert_eq!(
            t.cell(r, 0, 0),
            Some(Decimal::from_str(MP_2009_REMISE).unwrap())
        );
    }

    #[test]
    fn weak_attributes_are_display_only() {
        let schema = sales_schema();
        let data = sales_data();
        let ids = ContextIds::default();
        let nav = Navigator::new(&schema, &ids);
        let ca2 = nav.drilldown(&ca1(&nav), "DCLIENTS", "NDEPT").unwrap();
        let t = evaluate(&schema, &ca2, &data).unwrap();
        assert_eq!(t.row_headers.len(), 9);
        let attrs: Vec<&str> = t.row_headers[0].iter().map(|c| c.attr.as_str()).collect();
        assert_eq!(attrs, ["REGION", "NDEPT", "NOMDEPT"]);
        let json = t.to_json();
        assert_eq!(json["rowHeaders"][0][2]["attr"], "NOMDEPT");
        assert_eq!(json["measures"][0], "SUM(REMISE)");
    }
}
