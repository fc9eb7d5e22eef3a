//! MPS writer and reader.
//!
//! Layout (fixed across runs, documented here as the format contract):
//! sections `NAME`, `ROWS`, `COLUMNS` (binaries bracketed by
//! `'MARKER' 'INTORG'/'INTEND'` lines), `RHS`, `BOUNDS`, `ENDATA`.
//! The objective row is `N OBJ` and is minimized. Every variable emits
//! its objective coefficient (zeros included) so column order survives a
//! round trip; numbers use shortest-round-trip formatting so re-parsing
//! is bit-exact. When any name is longer than 8 characters (or unsafe,
//! or duplicated) all names are mangled to `C0000001`/`R0000001` and a
//! deterministic mangling table is written alongside as `<path>.names`
//! with `col`/`row` lines mapping mangled to original names.

use super::model::{MilpModel, Row, Sense, Variable};
use super::MilpError;
use std::path::Path;

const RESERVED: [&str; 4] = ["OBJ", "RHS", "BND", "MARKER"];

pub struct MpsDocument {
    pub text: String,
    /// Sidecar mangling table, present only when names were mangled.
    pub names_table: Option<String>,
    /// MPS name of every column, in model order.
    pub var_names: Vec<String>,
    pub row_names: Vec<String>,
}

fn name_safe(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 8
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name)
}

pub fn write_mps_string(model: &MilpModel, problem_name: &str) -> MpsDocument {
    let mut mangle = false;
    {
        let mut seen = std::collections::HashSet::new();
        for v in &model.vars {
            if !name_safe(&v.name) || !seen.insert(v.name.as_str()) {
                mangle = true;
                break;
            }
        }
        if !mangle {
            let mut seen = std::collections::HashSet::new();
            for r in &model.rows {
                if !name_safe(&r.name) || !seen.insert(r.name.as_str()) {
                    mangle = true;
                    break;
                }
            }
        }
    }

    let var_names: Vec<String> = if mangle {
        (0..model.vars.len())
            .map(|j| format!("C{:07}", j + 1))
            .collect()
    } else {
        model.vars.iter().map(|v| v.name.clone()).collect()
    };
    let row_names: Vec<String> = if mangle {
        (0..model.rows.len())
            .map(|r| format!("R{:07}", r + 1))
            .collect()
    } else {
        model.rows.iter().map(|r| r.name.clone()).collect()
    };

    // column-major coefficient lists
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.vars.len()];
    for (r, row) in model.rows.iter().enumerate() {
        for &(j, c) in &row.coeffs {
            col_entries[j].push((r, c));
        }
    }

    let mut out = String::new();
    out.push_str(&format!("NAME          {problem_name}\n"));
    out.push_str("* minimize OBJ\n");
    out.push_str("ROWS\n");
    out.push_str(" N  OBJ\n");
    for (r, row) in model.rows.iter().enumerate() {
        let tag = match row.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        out.push_str(&format!(" {}  {}\n", tag, row_names[r]));
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker_id = 0usize;
    for (j, v) in model.vars.iter().enumerate() {
        if v.binary != in_int {
            marker_id += 1;
            let kind = if v.binary { "'INTORG'" } else { "'INTEND'" };
            out.push_str(&format!(
                "    M{:07}  'MARKER'                 {}\n",
                marker_id, kind
            ));
            in_int = v.binary;
        }
        out.push_str(&format!("    {:<10}{:<10}{}\n", var_names[j], "OBJ", v.obj));
        for &(r, c) in &col_entries[j] {
            out.push_str(&format!(
                "    {:<10}{:<10}{}\n",
                var_names[j], row_names[r], c
            ));
        }
    }
    if in_int {
        marker_id += 1;
        out.push_str(&format!(
            "    M{:07}  'MARKER'                 'INTEND'\n",
            marker_id
        ));
    }

    out.push_str("RHS\n");
    for (r, row) in model.rows.iter().enumerate() {
        out.push_str(&format!(
            "    {:<10}{:<10}{}\n",
            "RHS", row_names[r], row.rhs
        ));
    }

    out.push_str("BOUNDS\n");
    for (j, v) in model.vars.iter().enumerate() {
        let name = &var_names[j];
        if v.binary {
            out.push_str(&format!(" BV {:<10}{:<10}\n", "BND", name));
            continue;
        }
        if v.lo == v.hi {
            out.push_str(&format!(" FX {:<10}{:<10}{}\n", "BND", name, v.lo));
            continue;
        }
        if v.lo.is_infinite() {
            out.push_str(&format!(" MI {:<10}{:<10}\n", "BND", name));
        } else if v.lo != 0.0 {
            out.push_str(&format!(" LO {:<10}{:<10}{}\n", "BND", name, v.lo));
        }
        if v.hi.is_finite() {
            out.push_str(&format!(" UP {:<10}{:<10}{}\n", "BND", name, v.hi));
        }
    }
    out.push_str("ENDATA\n");

    let names_table = if mangle {
        let mut t = String::from("# mangled original\n");
        for (j, v) in model.vars.iter().enumerate() {
            t.push_str(&format!("col {} {}\n", var_names[j], v.name));
        }
        for (r, row) in model.rows.iter().enumerate() {
            t.push_str(&format!("row {} {}\n", row_names[r], row.name));
        }
        Some(t)
    } else {
        None
    };

    MpsDocument {
        text: out,
        names_table,
        var_names,
        row_names,
    }
}

/// Write `<path>` and, when names were mangled, `<path>.names`.
pub fn write_mps(model: &MilpModel, path: impl AsRef<Path>) -> Result<MpsDocument, MilpError> {
    let doc = write_mps_string(model, "SDED");
    std::fs::write(path.as_ref(), &doc.text)?;
    if let Some(table) = &doc.names_table {
        let mut names_path = path.as_ref().as_os_str().to_owned();
        names_path.push(".names");
        std::fs::write(names_path, table)?;
    }
    Ok(doc)
}

pub fn parse_mps(path: impl AsRef<Path>) -> Result<MilpModel, MilpError> {
    let text = std::fs::read_to_string(path)?;
    parse_mps_str(&text)
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

pub fn parse_mps_str(text: &str) -> Result<MilpModel, MilpError> {
    let mut model = MilpModel::new();
    let mut section = Section::Preamble;
    let mut obj_row: Option<String> = None;
    let mut row_index: std::collections::HashMap<String, usize> = Default::default();
    let mut var_index: std::collections::HashMap<String, usize> = Default::default();
    let mut integer_mode = false;
    let mut integers: Vec<usize> = Vec::new();
    // vars with an explicit LO/MI/FX bound keep their parsed lower bound
    let mut lower_set: Vec<bool> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let err = |msg: &str| MilpError::Parse(format!("line {}: {}", lineno + 1, msg));

        if !raw.starts_with(' ') {
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("NAME") => continue,
                Some("ROWS") => {
                    section = Section::Rows;
                    continue;
                }
                Some("COLUMNS") => {
                    section = Section::Columns;
                    continue;
                }
                Some("RHS") => {
                    section = Section::Rhs;
                    continue;
                }
                Some("RANGES") => {
                    return Err(err("RANGES section is not supported"));
                }
                Some("BOUNDS") => {
                    section = Section::Bounds;
                    continue;
                }
                Some("ENDATA") => {
                    section = Section::Done;
                    break;
                }
                Some(other) => return Err(err(&format!("unknown section {other}"))),
                None => continue,
            }
        }

        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err("expected '<type> <name>'"));
                }
                let name = toks[1].to_string();
                match toks[0] {
                    "N" => {
                        if obj_row.is_some() {
                            return Err(err("second objective row"));
                        }
                        obj_row = Some(name);
                    }
                    "L" | "G" | "E" => {
                        let sense = match toks[0] {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        row_index.insert(name.clone(), model.rows.len());
                        model.rows.push(Row {
                            name,
                            coeffs: Vec::new(),
                            sense,
                            rhs: 0.0,
                        });
                    }
                    other => return Err(err(&format!("unknown row type {other}"))),
                }
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    if toks.contains(&"'INTORG'") {
                        integer_mode = true;
                    } else if toks.contains(&"'INTEND'") {
                        integer_mode = false;
                    } else {
                        return Err(err("marker without INTORG/INTEND"));
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err("expected '<col> <row> <value> [<row> <value>]'"));
                }
                let col = toks[0];
                let j = *var_index.entry(col.to_string()).or_insert_with(|| {
                    model.vars.push(Variable {
                        name: col.to_string(),
                        lo: 0.0,
                        hi: f64::INFINITY,
                        obj: 0.0,
                        binary: false,
                    });
                    lower_set.push(false);
                    if integer_mode {
                        integers.push(model.vars.len() - 1);
                    }
                    model.vars.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let value: f64 = pair[1]
                        .parse()
                        .map_err(|_| err(&format!("bad number {}", pair[1])))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        model.vars[j].obj = value;
                    } else {
                        let &r = row_index
                            .get(pair[0])
                            .ok_or_else(|| err(&format!("unknown row {}", pair[0])))?;
                        model.rows[r].coeffs.push((j, value));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err("expected '<set> <row> <value> [<row> <value>]'"));
                }
                for pair in toks[1..].chunks(2) {
                    if Some(pair[0]) == obj_row.as_deref() {
                        continue; // objective offset unsupported, ignore
                    }
                    let &r = row_index
                        .get(pair[0])
                        .ok_or_else(|| err(&format!("unknown row {}", pair[0])))?;
                    model.rows[r].rhs = pair[1]
                        .parse()
                        .map_err(|_| err(&format!("bad number {}", pair[1])))?;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(err("expected '<type> <set> <col> [<value>]'"));
                }
                let &j = var_index
                    .get(toks[2])
                    .ok_or_else(|| err(&format!("unknown column {}", toks[2])))?;
                let value = || -> Result<f64, MilpError> {
                    toks.get(3)
                        .ok_or_else(|| err("bound requires a value"))?
                        .parse()
                        .map_err(|_| err(&format!("bad number {}", toks[3])))
                };
                match toks[0] {
                    "UP" => model.vars[j].hi = value()?,
                    "LO" => {
                        model.vars[j].lo = value()?;
                        lower_set[j] = true;
                    }
                    "FX" => {
                        let v = value()?;
                        model.vars[j].lo = v;
                        model.vars[j].hi = v;
                        lower_set[j] = true;
                    }
                    "MI" => {
                        model.vars[j].lo = f64::NEG_INFINITY;
                        lower_set[j] = true;
                    }
                    "PL" => model.vars[j].hi = f64::INFINITY,
                    "BV" => {
                        model.vars[j].lo = 0.0;
                        model.vars[j].hi = 1.0;
                        model.vars[j].binary = true;
                        lower_set[j] = true;
                    }
                    other => return Err(err(&format!("unsupported bound type {other}"))),
                }
            }
            Section::Preamble | Section::Done => {
                return Err(err("data outside any section"));
            }
        }
    }

    if section != Section::Done {
        return Err(MilpError::Parse("missing ENDATA".into()));
    }
    for &j in &integers {
        let v = &mut model.vars[j];
        if v.lo == 0.0 && v.hi == 1.0 {
            v.binary = true;
        } else {
            return Err(MilpError::Parse(format!(
                "integer column {} has non-binary bounds [{}, {}]",
                v.name, v.lo, v.hi
            )));
        }
    }
    model.validate()?;
    Ok(model)
}
