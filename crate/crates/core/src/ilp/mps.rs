//! Fixed-format MPS writer and a minimal reader for the subset it emits.
//!
//! Columns are named `x<i>`, rows `c<j>`, the objective row `OBJ`. Every
//! column sits between `INTORG`/`INTEND` markers with bounds `[0, 1]`;
//! fixed columns are written as `FX` bounds. Maximization problems carry
//! an `OBJSENSE` section.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::model::{Constraint, Direction, IlpInstance, Sense};
use crate::error::{Error, Result};

const OBJ_ROW: &str = "OBJ";

pub fn column_name(i: usize) -> String {
    format!("x{i}")
}

pub fn row_name(j: usize) -> String {
    format!("c{j}")
}

/// Parsed MPS problem: the instance plus any columns fixed through bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsProblem {
    pub name: String,
    pub instance: IlpInstance,
    pub fixed: Vec<Option<bool>>,
    pub column_names: Vec<String>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Serialize `instance`; `fixed` may be empty or one entry per column.
pub fn write(instance: &IlpInstance, fixed: &[Option<bool>], name: &str) -> String {
    let n = instance.num_vars();
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (j, row) in instance.constraints().iter().enumerate() {
        for &(i, a) in &row.terms {
            col_entries[i].push((j, a));
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    if instance.direction() == Direction::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for (j, row) in instance.constraints().iter().enumerate() {
        let kind = match row.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {kind:<2} {}", row_name(j));
    }

    out.push_str("COLUMNS\n");
    let _ = writeln!(
        out,
        "    {:<8}  {:<8}  {:<12}   {:<8}",
        "MARKER", "'MARKER'", "", "'INTORG'"
    );
    for (i, entries) in col_entries.iter().enumerate() {
        let col = column_name(i);
        // the objective entry is always written so that empty columns survive
        let _ = writeln!(
            out,
            "    {:<8}  {:<8}  {:>12}",
            col,
            OBJ_ROW,
            num(instance.objective()[i])
        );
        for &(j, a) in entries {
            let _ = writeln!(out, "    {:<8}  {:<8}  {:>12}", col, row_name(j), num(a));
        }
    }
    let _ = writeln!(
        out,
        "    {:<8}  {:<8}  {:<12}   {:<8}",
        "MARKER", "'MARKER'", "", "'INTEND'"
    );

    out.push_str("RHS\n");
    for (j, row) in instance.constraints().iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    {:<8}  {:<8}  {:>12}", "RHS", row_name(j), num(row.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for i in 0..n {
        let col = column_name(i);
        match fixed.get(i).copied().flatten() {
            Some(v) => {
                let _ = writeln!(
                    out,
                    " {:<2} {:<8}  {:<8}  {:>12}",
                    "FX",
                    "BND",
                    col,
                    if v { "1" } else { "0" }
                );
            }
            None => {
                let _ = writeln!(out, " {:<2} {:<8}  {:<8}  {:>12}", "UP", "BND", col, "1");
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

struct ColumnData {
    integer: bool,
    lower: f64,
    upper: f64,
    objective: f64,
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number {tok:?}")));
    }
    Ok(v)
}

/// Parse the MPS subset produced by [`write`]; tokens are split on whitespace.
pub fn parse(text: &str) -> Result<MpsProblem> {
    let mut section = Section::None;
    let mut name = String::new();
    let mut direction = Direction::Minimize;
    let mut objective_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut columns: Vec<ColumnData> = Vec::new();
    let mut column_names: Vec<String> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut in_integer_block = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if header {
            section = match toks[0] {
                "NAME" => {
                    name = toks.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        direction = parse_sense_word(s, line)?;
                        Section::None
                    } else {
                        Section::ObjSense
                    }
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                "RANGES" => {
                    return Err(Error::parse(line, "RANGES section is not supported"));
                }
                other => return Err(Error::parse(line, format!("unknown section {other:?}"))),
            };
            continue;
        }

        match section {
            Section::None | Section::Done => {
                return Err(Error::parse(line, "data line outside of a section"));
            }
            Section::ObjSense => {
                direction = parse_sense_word(toks[0], line)?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(Error::parse(line, "ROWS entries need a type and a name"));
                }
                let sense = match toks[0] {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    other => return Err(Error::parse(line, format!("unknown row type {other:?}"))),
                };
                if row_index.insert(toks[1].to_string(), rows.len()).is_some() {
                    return Err(Error::parse(line, format!("row {:?} declared twice", toks[1])));
                }
                rows.push((toks[1].to_string(), sense));
                row_terms.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_integer_block = true,
                        "'INTEND'" => in_integer_block = false,
                        other => {
                            return Err(Error::parse(line, format!("unknown marker {other}")))
                        }
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(Error::parse(line, "COLUMNS entries need 3 or 5 fields"));
                }
                let col = match col_index.get(toks[0]) {
                    Some(&c) => c,
                    None => {
                        let c = columns.len();
                        col_index.insert(toks[0].to_string(), c);
                        column_names.push(toks[0].to_string());
                        columns.push(ColumnData {
                            integer: in_integer_block,
                            lower: 0.0,
                            upper: f64::INFINITY,
                            objective: 0.0,
                        });
                        c
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let value = parse_value(pair[1], line)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        columns[col].objective = value;
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| {
                            Error::parse(line, format!("undeclared row {:?}", pair[0]))
                        })?;
                        if row_terms[r].iter().any(|&(c, _)| c == col) {
                            return Err(Error::parse(
                                line,
                                format!("column {:?} appears twice in row {:?}", toks[0], pair[0]),
                            ));
                        }
                        row_terms[r].push((col, value));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(Error::parse(line, "RHS entries need 3 or 5 fields"));
                }
                for pair in toks[1..].chunks(2) {
                    let value = parse_value(pair[1], line)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        return Err(Error::parse(line, "objective constants are not supported"));
                    }
                    let r = *row_index.get(pair[0]).ok_or_else(|| {
                        Error::parse(line, format!("undeclared row {:?}", pair[0]))
                    })?;
                    rhs[r] = value;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(Error::parse(line, "BOUNDS entries need a type, set and column"));
                }
                let c = *col_index.get(toks[2]).ok_or_else(|| {
                    Error::parse(line, format!("bound on undeclared column {:?}", toks[2]))
                })?;
                let value = match toks.get(3) {
                    Some(t) => Some(parse_value(t, line)?),
                    None => None,
                };
                let need = |v: Option<f64>| {
                    v.ok_or_else(|| Error::parse(line, format!("{} bound needs a value", toks[0])))
                };
                match toks[0] {
                    "UP" => columns[c].upper = need(value)?,
                    "LO" => columns[c].lower = need(value)?,
                    "FX" => {
                        let v = need(value)?;
                        columns[c].lower = v;
                        columns[c].upper = v;
                    }
                    "BV" => {
                        columns[c].lower = 0.0;
                        columns[c].upper = 1.0;
                        columns[c].integer = true;
                    }
                    other => {
                        return Err(Error::UnsupportedDomain(format!(
                            "line {line}: bound type {other} on column {:?}",
                            toks[2]
                        )))
                    }
                }
            }
        }
    }

    if section != Section::Done {
        return Err(Error::parse(text.lines().count().max(1), "missing ENDATA"));
    }

    let mut fixed = Vec::with_capacity(columns.len());
    for (c, data) in columns.iter().enumerate() {
        let binary_bound = |v: f64| v == 0.0 || v == 1.0;
        if !data.integer {
            return Err(Error::UnsupportedDomain(format!(
                "column {:?} is not integer",
                column_names[c]
            )));
        }
        if !binary_bound(data.lower) || !binary_bound(data.upper) || data.lower > data.upper {
            return Err(Error::UnsupportedDomain(format!(
                "column {:?} has bounds [{}, {}], expected a subset of [0, 1]",
                column_names[c], data.lower, data.upper
            )));
        }
        fixed.push((data.lower == data.upper).then_some(data.upper == 1.0));
    }

    let constraints = rows
        .iter()
        .zip(row_terms)
        .zip(rhs)
        .map(|(((_, sense), terms), b)| Constraint::new(terms, *sense, b))
        .collect();
    let objective = columns.iter().map(|c| c.objective).collect();
    let instance = IlpInstance::new(objective, direction, constraints)?;
    Ok(MpsProblem {
        name,
        instance,
        fixed,
        column_names,
    })
}

fn parse_sense_word(word: &str, line: usize) -> Result<Direction> {
    match word.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => Ok(Direction::Maximize),
        "MIN" | "MINIMIZE" => Ok(Direction::Minimize),
        other => Err(Error::parse(line, format!("unknown objective sense {other:?}"))),
    }
}
