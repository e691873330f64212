//! Aligned text output for `--output text`.

use annolap_core::{to_tree, Annotation, HeaderCell, MultidimensionalTable, StepOutcome};
use rust_decimal::Decimal;
use std::io::{self, Write};

pub fn outcome(out: &mut impl Write, o: &StepOutcome) -> io::Result<()> {
    writeln!(out, "context {}", o.context.id())?;
    to_tree(&o.context).walk(|label, ancestors| {
        let _ = writeln!(out, "  {}{label}", "  ".repeat(ancestors.len()));
    });
    table(out, &o.table)?;
    writeln!(out, "annotations: {}", ids(&o.annotations))?;
    if o.recommendations.is_empty() {
        writeln!(out, "recommendations: none")?;
    }
    for (i, r) in o.recommendations.iter().enumerate() {
        writeln!(
            out,
            "recommendation {} [{}] {}: annotations {}",
            i + 1,
            r.preferences.join(", "),
            r.context.id(),
            ids(&r.annotations)
        )?;
        to_tree(&r.context).walk(|label, ancestors| {
            let _ = writeln!(out, "    {}{label}", "  ".repeat(ancestors.len()));
        });
    }
    Ok(())
}

fn ids(annotations: &[Annotation]) -> String {
    if annotations.is_empty() {
        return "none".into();
    }
    annotations
        .iter()
        .map(|a| a.id.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Exact up to six decimals; longer quotients (averages) are rounded.
fn number(v: Decimal) -> String {
    if v.scale() > 6 {
        v.round_dp(6).to_string()
    } else {
        v.to_string()
    }
}

fn header(h: &[HeaderCell]) -> String {
    h.iter()
        .map(|c| c.value.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line per row header, one column per (column header, measure).
pub fn table(out: &mut impl Write, t: &MultidimensionalTable) -> io::Result<()> {
    let two_axes = t.col_headers.iter().any(|h| !h.is_empty());
    let mut head_cols = Vec::new();
    let mut measure_cols = Vec::new();
    for h in &t.col_headers {
        for measure in &t.measures {
            head_cols.push(if two_axes { header(h) } else { String::new() });
            measure_cols.push(measure.to_string());
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (r, h) in t.row_headers.iter().enumerate() {
        let mut line = vec![header(h)];
        for c in 0..t.col_headers.len() {
            for m in 0..t.measures.len() {
                line.push(t.cell(r, c, m).map(number).unwrap_or_default());
            }
        }
        rows.push(line);
    }
    let mut widths = vec![rows.iter().map(|r| r[0].chars().count()).max().unwrap_or(0)];
    for i in 0..measure_cols.len() {
        let w = rows
            .iter()
            .map(|r| r[i + 1].chars().count())
            .chain([
                head_cols[i].chars().count(),
                measure_cols[i].chars().count(),
            ])
            .max()
            .unwrap_or(0);
        widths.push(w);
    }
    let line = |out: &mut dyn Write, first: &str, rest: &[String], right: bool| -> io::Result<()> {
        write!(out, "  {first:<w$}", w = widths[0])?;
        for (i, v) in rest.iter().enumerate() {
            if right {
                write!(out, " | {v:>w$}", w = widths[i + 1])?;
            } else {
                write!(out, " | {v:<w$}", w = widths[i + 1])?;
            }
        }
        writeln!(out)
    };
    if two_axes {
        line(out, "", &head_cols, false)?;
    }
    line(out, "", &measure_cols, false)?;
    for r in &rows {
        line(out, &r[0], &r[1..], true)?;
    }
    Ok(())
}
