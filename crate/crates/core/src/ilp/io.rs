//! Canonical instance files.
//!
//! The canonical format is line-delimited JSON: a versioned header line, an
//! objective line, then one line per constraint.
//!
//! ```text
//! {"format":"hyplns-ilp/1","direction":"maximize","num_vars":3,"num_cons":1}
//! {"objective":[1.0,1.0,1.0]}
//! {"terms":[[0,1.0],[1,1.0]],"sense":"<=","rhs":1.0}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Constraint, Direction, IlpInstance, Sense};
use super::mps;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "hyplns-ilp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Canonical,
    Mps,
}

impl FileFormat {
    /// `.mps` selects MPS, anything else the canonical format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("mps") => FileFormat::Mps,
            _ => FileFormat::Canonical,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    direction: Direction,
    num_vars: usize,
    num_cons: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveLine {
    objective: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowLine {
    terms: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

pub fn to_canonical_string(instance: &IlpInstance) -> String {
    let mut out = String::new();
    let header = Header {
        format: FORMAT_TAG.to_string(),
        direction: instance.direction(),
        num_vars: instance.num_vars(),
        num_cons: instance.num_cons(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    let obj = ObjectiveLine {
        objective: instance.objective().to_vec(),
    };
    out.push_str(&serde_json::to_string(&obj).expect("objective serializes"));
    out.push('\n');
    for c in instance.constraints() {
        let row = RowLine {
            terms: c.terms.clone(),
            sense: c.sense,
            rhs: c.rhs,
        };
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    out
}

pub fn from_canonical_str(text: &str) -> Result<IlpInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, htext) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let header: Header =
        serde_json::from_str(htext).map_err(|e| Error::parse(hline, e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(Error::parse(
            hline,
            format!("unsupported format tag {:?}, expected {FORMAT_TAG:?}", header.format),
        ));
    }

    let (oline, otext) = lines
        .next()
        .ok_or_else(|| Error::parse(hline + 1, "missing objective line"))?;
    let obj: ObjectiveLine =
        serde_json::from_str(otext).map_err(|e| Error::parse(oline, e.to_string()))?;
    if obj.objective.len() != header.num_vars {
        return Err(Error::parse(
            oline,
            format!(
                "objective has {} entries, header declares {} variables",
                obj.objective.len(),
                header.num_vars
            ),
        ));
    }
    if obj.objective.iter().any(|c| !c.is_finite()) {
        return Err(Error::parse(oline, "non-finite objective coefficient"));
    }

    let mut rows = Vec::with_capacity(header.num_cons);
    let mut last_line = oline;
    for (lineno, ltext) in lines {
        last_line = lineno;
        let row: RowLine =
            serde_json::from_str(ltext).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if row.terms.is_empty() {
            return Err(Error::parse(lineno, "constraint has no terms"));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, a) in &row.terms {
            if i >= header.num_vars {
                return Err(Error::parse(
                    lineno,
                    format!("constraint references undeclared column {i}"),
                ));
            }
            if !seen.insert(i) {
                return Err(Error::parse(lineno, format!("column {i} listed twice")));
            }
            if !a.is_finite() {
                return Err(Error::parse(lineno, "non-finite coefficient"));
            }
        }
        if !row.rhs.is_finite() {
            return Err(Error::parse(lineno, "non-finite rhs"));
        }
        rows.push(Constraint::new(row.terms, row.sense, row.rhs));
    }
    if rows.len() != header.num_cons {
        return Err(Error::parse(
            last_line,
            format!(
                "found {} constraints, header declares {}",
                rows.len(),
                header.num_cons
            ),
        ));
    }
    IlpInstance::new(obj.objective, header.direction, rows)
}

pub fn read_instance(path: &Path, format: FileFormat) -> Result<IlpInstance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        FileFormat::Canonical => from_canonical_str(&text),
        FileFormat::Mps => {
            let problem = mps::parse(&text)?;
            if problem.fixed.iter().any(Option::is_some) {
                return Err(Error::UnsupportedDomain(
                    "file fixes some columns; read it with mps::parse to keep the fixings"
                        .into(),
                ));
            }
            Ok(problem.instance)
        }
    }
}

pub fn write_instance(instance: &IlpInstance, path: &Path, format: FileFormat) -> Result<()> {
    let text = match format {
        FileFormat::Canonical => to_canonical_string(instance),
        FileFormat::Mps => mps::write(instance, &[], "HYPLNS"),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
