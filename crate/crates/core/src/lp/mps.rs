//! Free-format MPS reading and writing.
//!
//! Supported sections: `NAME`, `OBJSENSE`, `ROWS`, `COLUMNS` (with integer
//! markers, which are relaxed to continuous), `RHS`, `RANGES`, `BOUNDS` and
//! `ENDATA`. Names are case-sensitive and must not contain whitespace.
//! Maximization problems are negated on input so that an [`LpInstance`] is
//! always a minimization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::instance::{normalize_infinity, LpInstance, RowSense};
use super::sparse::SparseColMatrix;
use crate::error::{Error, Result};

pub fn read_mps(path: impl AsRef<Path>) -> Result<LpInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mps(&text)
}

pub fn write_mps(lp: &LpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_mps(lp)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    End,
}

enum RowRef {
    Objective,
    Free,
    Constraint(usize),
}

struct Parser {
    name: String,
    objective_name: Option<String>,
    maximize: bool,
    row_index: HashMap<String, usize>,
    free_rows: Vec<String>,
    row_names: Vec<String>,
    row_sense: Vec<RowSense>,
    rhs: Vec<f64>,
    range: Vec<Option<f64>>,
    col_index: HashMap<String, usize>,
    col_names: Vec<String>,
    columns: Vec<Vec<(usize, f64)>>,
    objective: Vec<f64>,
    offset: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    in_integer_block: bool,
    integer_cols: usize,
}

impl Parser {
    fn new() -> Self {
        Self {
            name: String::new(),
            objective_name: None,
            maximize: false,
            row_index: HashMap::new(),
            free_rows: Vec::new(),
            row_names: Vec::new(),
            row_sense: Vec::new(),
            rhs: Vec::new(),
            range: Vec::new(),
            col_index: HashMap::new(),
            col_names: Vec::new(),
            columns: Vec::new(),
            objective: Vec::new(),
            offset: 0.0,
            lower: Vec::new(),
            upper: Vec::new(),
            in_integer_block: false,
            integer_cols: 0,
        }
    }

    fn row(&self, line: usize, name: &str) -> Result<RowRef> {
        if self.objective_name.as_deref() == Some(name) {
            Ok(RowRef::Objective)
        } else if let Some(&i) = self.row_index.get(name) {
            Ok(RowRef::Constraint(i))
        } else if self.free_rows.iter().any(|r| r == name) {
            Ok(RowRef::Free)
        } else {
            Err(Error::parse(line, format!("unknown row '{name}'")))
        }
    }

    fn column(&mut self, name: &str) -> usize {
        if let Some(&j) = self.col_index.get(name) {
            return j;
        }
        let j = self.col_names.len();
        self.col_index.insert(name.to_string(), j);
        self.col_names.push(name.to_string());
        self.columns.push(Vec::new());
        self.objective.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        if self.in_integer_block {
            self.integer_cols += 1;
        }
        j
    }

    fn rows_line(&mut self, line: usize, tok: &[&str]) -> Result<()> {
        let [kind, name] = tok else {
            return Err(Error::parse(line, "ROWS entry needs a type and a name"));
        };
        if self.row_index.contains_key(*name) || self.objective_name.as_deref() == Some(*name) {
            return Err(Error::parse(line, format!("duplicate row '{name}'")));
        }
        let sense = match *kind {
            "N" => {
                if self.objective_name.is_none() {
                    self.objective_name = Some(name.to_string());
                } else {
                    log::warn!("line {line}: dropping extra free row '{name}'");
                    self.free_rows.push(name.to_string());
                }
                return Ok(());
            }
            "L" => RowSense::Le,
            "G" => RowSense::Ge,
            "E" => RowSense::Eq,
            other => return Err(Error::parse(line, format!("unknown row type '{other}'"))),
        };
        self.row_index.insert(name.to_string(), self.row_names.len());
        self.row_names.push(name.to_string());
        self.row_sense.push(sense);
        self.rhs.push(0.0);
        self.range.push(None);
        Ok(())
    }

    fn columns_line(&mut self, line: usize, tok: &[&str]) -> Result<()> {
        if tok.len() >= 3 && tok[1].trim_matches('\'') == "MARKER" {
            match tok[2].trim_matches('\'') {
                "INTORG" => self.in_integer_block = true,
                "INTEND" => self.in_integer_block = false,
                other => return Err(Error::parse(line, format!("unknown marker '{other}'"))),
            }
            return Ok(());
        }
        if tok.len() != 3 && tok.len() != 5 {
            return Err(Error::parse(line, "COLUMNS entry needs 3 or 5 fields"));
        }
        let j = self.column(tok[0]);
        for pair in tok[1..].chunks(2) {
            let v = parse_num(line, pair[1])?;
            match self.row(line, pair[0])? {
                RowRef::Objective => self.objective[j] += v,
                RowRef::Free => {}
                RowRef::Constraint(i) => self.columns[j].push((i, v)),
            }
        }
        Ok(())
    }

    /// RHS and RANGES share layout: optional set name followed by pairs.
    fn vector_line(&mut self, line: usize, tok: &[&str], ranges: bool) -> Result<()> {
        let pairs = match tok.len() {
            2 | 4 => tok,
            3 | 5 => &tok[1..],
            _ => return Err(Error::parse(line, "expected [set] row value [row value]")),
        };
        for pair in pairs.chunks(2) {
            let v = parse_num(line, pair[1])?;
            match (self.row(line, pair[0])?, ranges) {
                (RowRef::Objective, false) => self.offset = -v,
                (RowRef::Objective, true) => {
                    return Err(Error::parse(line, "range on objective row"))
                }
                (RowRef::Free, _) => {}
                (RowRef::Constraint(i), false) => self.rhs[i] = v,
                (RowRef::Constraint(i), true) => self.range[i] = Some(v),
            }
        }
        Ok(())
    }

    fn bounds_line(&mut self, line: usize, tok: &[&str]) -> Result<()> {
        let kind = *tok
            .first()
            .ok_or_else(|| Error::parse(line, "empty BOUNDS entry"))?;
        let valued = match kind {
            "UP" | "LO" | "FX" | "LI" | "UI" => true,
            "FR" | "MI" | "PL" | "BV" => false,
            "SC" => {
                return Err(Error::UnsupportedFeature {
                    line,
                    feature: "semi-continuous bound".into(),
                })
            }
            other => return Err(Error::parse(line, format!("unknown bound type '{other}'"))),
        };
        // [type, set?, column, value?]
        let (col, value) = match (valued, tok.len()) {
            (true, 4) => (tok[2], Some(parse_num(line, tok[3])?)),
            (true, 3) => (tok[1], Some(parse_num(line, tok[2])?)),
            (false, 3) if kind != "BV" => (tok[2], None),
            (false, 2) => (tok[1], None),
            // BV with an explicit (ignored) value
            (false, 3) => (tok[1], None),
            (false, 4) => (tok[2], None),
            _ => return Err(Error::parse(line, "malformed BOUNDS entry")),
        };
        let j = *self
            .col_index
            .get(col)
            .ok_or_else(|| Error::parse(line, format!("unknown column '{col}'")))?;
        let v = value.map(normalize_infinity);
        match kind {
            "UP" | "UI" => {
                let v = v.unwrap();
                if v < 0.0 && self.lower[j] == 0.0 {
                    log::warn!("line {line}: negative upper bound on '{col}' with zero lower bound; lower set to -inf");
                    self.lower[j] = f64::NEG_INFINITY;
                }
                self.upper[j] = v;
            }
            "LO" | "LI" => self.lower[j] = v.unwrap(),
            "FX" => {
                self.lower[j] = v.unwrap();
                self.upper[j] = v.unwrap();
            }
            "FR" => {
                self.lower[j] = f64::NEG_INFINITY;
                self.upper[j] = f64::INFINITY;
            }
            "MI" => self.lower[j] = f64::NEG_INFINITY,
            "PL" => self.upper[j] = f64::INFINITY,
            "BV" => {
                self.lower[j] = 0.0;
                self.upper[j] = 1.0;
            }
            _ => unreachable!(),
        }
        if kind == "BV" || kind == "LI" || kind == "UI" {
            self.integer_cols += 1;
        }
        Ok(())
    }

    fn finish(self) -> Result<LpInstance> {
        if self.integer_cols > 0 {
            log::warn!(
                "{}: relaxing {} integer column declarations to continuous",
                self.name,
                self.integer_cols
            );
        }
        let m = self.row_names.len();
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let lp = LpInstance {
            name: self.name,
            objective_name: self.objective_name.unwrap_or_else(|| "obj".into()),
            objective: self.objective.iter().map(|c| sign * c).collect(),
            objective_offset: sign * self.offset,
            matrix: SparseColMatrix::from_columns(m, self.columns)?,
            rhs: self.rhs,
            row_sense: self.row_sense,
            row_range: self.range,
            col_lower: self.lower,
            col_upper: self.upper,
            col_names: self.col_names,
            row_names: self.row_names,
        };
        lp.validate()?;
        Ok(lp)
    }
}

fn parse_num(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("invalid number '{s}'")))
        .and_then(|v| {
            if v.is_nan() {
                Err(Error::parse(line, "NaN value"))
            } else {
                Ok(v)
            }
        })
}

pub fn parse_mps(text: &str) -> Result<LpInstance> {
    let mut p = Parser::new();
    let mut section = Section::Start;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tok: Vec<&str> = raw.split_whitespace().collect();
        let header = !raw.starts_with(char::is_whitespace);
        if header {
            section = match tok[0] {
                "NAME" => {
                    p.name = tok.get(1).copied().unwrap_or_default().to_string();
                    Section::Start
                }
                "OBJSENSE" => {
                    if let Some(s) = tok.get(1) {
                        p.maximize = parse_sense(line, s)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "SOS" | "QUADOBJ" | "QSECTION" | "QMATRIX" | "QCMATRIX" | "INDICATORS" => {
                    return Err(Error::UnsupportedFeature {
                        line,
                        feature: format!("{} section", tok[0]),
                    })
                }
                other => return Err(Error::parse(line, format!("unknown section '{other}'"))),
            };
            if section == Section::End {
                break;
            }
            continue;
        }
        match section {
            Section::Start => return Err(Error::parse(line, "data before first section")),
            Section::ObjSense => p.maximize = parse_sense(line, tok[0])?,
            Section::Rows => p.rows_line(line, &tok)?,
            Section::Columns => p.columns_line(line, &tok)?,
            Section::Rhs => p.vector_line(line, &tok, false)?,
            Section::Ranges => p.vector_line(line, &tok, true)?,
            Section::Bounds => p.bounds_line(line, &tok)?,
            Section::End => unreachable!(),
        }
    }
    if p.objective_name.is_none() && p.row_names.is_empty() && p.col_names.is_empty() {
        return Err(Error::parse(0, "no ROWS or COLUMNS found"));
    }
    p.finish()
}

fn parse_sense(line: usize, s: &str) -> Result<bool> {
    match s {
        "MAX" | "MAXIMIZE" => Ok(true),
        "MIN" | "MINIMIZE" => Ok(false),
        other => Err(Error::parse(line, format!("unknown objective sense '{other}'"))),
    }
}

/// Shortest text that parses back to exactly `v`.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        return "1e30".into();
    }
    if v == f64::NEG_INFINITY {
        return "-1e30".into();
    }
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::InvalidLp(format!(
            "{kind} name '{name}' cannot be written in free MPS"
        )));
    }
    Ok(())
}

pub fn format_mps(lp: &LpInstance) -> Result<String> {
    lp.validate()?;
    for n in &lp.col_names {
        check_name("column", n)?;
    }
    for n in lp.row_names.iter().chain(std::iter::once(&lp.objective_name)) {
        check_name("row", n)?;
    }
    let mut out = String::new();
    let name = if lp.name.is_empty() { "LP" } else { &lp.name };
    // writing to a String cannot fail
    let _ = writeln!(out, "* written by lpreform");
    let _ = writeln!(out, "NAME {name}");
    let _ = writeln!(out, "ROWS");
    let _ = writeln!(out, " N {}", lp.objective_name);
    for (i, row) in lp.row_names.iter().enumerate() {
        let t = match lp.row_sense[i] {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {t} {row}");
    }
    let _ = writeln!(out, "COLUMNS");
    for j in 0..lp.num_cols() {
        let col = &lp.col_names[j];
        let c = lp.objective[j];
        let (rows, vals) = lp.matrix.column(j);
        if c != 0.0 || rows.is_empty() {
            let _ = writeln!(out, "    {col} {} {}", lp.objective_name, fmt_num(c));
        }
        for (&i, &v) in rows.iter().zip(vals) {
            let _ = writeln!(out, "    {col} {} {}", lp.row_names[i], fmt_num(v));
        }
    }
    let _ = writeln!(out, "RHS");
    for i in 0..lp.num_rows() {
        if lp.rhs[i] != 0.0 {
            let _ = writeln!(out, "    RHS {} {}", lp.row_names[i], fmt_num(lp.rhs[i]));
        }
    }
    if lp.objective_offset != 0.0 {
        let _ = writeln!(
            out,
            "    RHS {} {}",
            lp.objective_name,
            fmt_num(-lp.objective_offset)
        );
    }
    if lp.row_range.iter().any(Option::is_some) {
        let _ = writeln!(out, "RANGES");
        for i in 0..lp.num_rows() {
            if let Some(r) = lp.row_range[i] {
                let _ = writeln!(out, "    RNG {} {}", lp.row_names[i], fmt_num(r));
            }
        }
    }
    let _ = writeln!(out, "BOUNDS");
    for j in 0..lp.num_cols() {
        let col = &lp.col_names[j];
        let (l, u) = (lp.col_lower[j], lp.col_upper[j]);
        if l == u {
            let _ = writeln!(out, " FX BND {col} {}", fmt_num(l));
            continue;
        }
        if l == f64::NEG_INFINITY && u == f64::INFINITY {
            let _ = writeln!(out, " FR BND {col}");
            continue;
        }
        if l == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND {col}");
        } else if l != 0.0 {
            let _ = writeln!(out, " LO BND {col} {}", fmt_num(l));
        }
        if u != f64::INFINITY {
            let _ = writeln!(out, " UP BND {col} {}", fmt_num(u));
        }
    }
    let _ = writeln!(out, "ENDATA");
    Ok(out)
}
