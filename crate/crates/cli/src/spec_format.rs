//! The problem spec file format: a flat text document of `key = value` lines
//! under bracketed sections, chosen for reproducibility and diff-ability of
//! experiments. `#` starts a comment. Numbers are parsed at full precision;
//! closed-form fields use the prefix grammar of the core catalog.
//!
//! ```text
//! [grid]
//! t_end = 1.0
//! n_points = 1001
//!
//! [equation]
//! lambda = 1.0
//! x0 = 1.0
//! y0 = 1.0
//!
//! [fields]
//! b = 0
//! f1 = const(0)
//! f2 = const(1)
//! g = const(0)
//! p = const(0)
//!
//! [constants]
//! L = 1.0
//! K = 1.0
//! k = 0.0
//! h_l1 = 0.0
//! ```
//!
//! Optional sections: `[lower]` (`u`, `v` as a constant or `tab(v0,...)`),
//! `[engine]` (`tol_outer`, `max_outer`, `direction`, `slack`,
//! `record_full_iterates`) and `[audit]` (`trials`, `rng_seed`).
//! Unknown sections and keys are rejected with their location.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use qfde_core::qfde::{LowerPair, DEFAULT_SINGULARITY_FLOOR};
use qfde_core::{
    Direction, EngineConfig, Grid, GridFunction, ProblemInstance, ScalarField2, TimePoly,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LowerSpec {
    Constant(f64),
    Table(Vec<f64>),
}

impl LowerSpec {
    fn to_grid_function(&self, grid: Grid) -> Result<GridFunction, SpecError> {
        match self {
            LowerSpec::Constant(c) => GridFunction::constant(grid, *c)
                .map_err(|e| SpecError::invalid(format!("lower constant: {e}"))),
            LowerSpec::Table(values) => {
                if values.len() != grid.n_points() {
                    return Err(SpecError::invalid(format!(
                        "tabulated lower solution has {} values, grid has {} nodes",
                        values.len(),
                        grid.n_points()
                    )));
                }
                GridFunction::new(grid, values.clone())
                    .map_err(|e| SpecError::invalid(format!("lower table: {e}")))
            }
        }
    }

    fn render(&self) -> String {
        match self {
            LowerSpec::Constant(c) => format!("{c}"),
            LowerSpec::Table(values) => {
                let items: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
                format!("tab({})", items.join(","))
            }
        }
    }
}

/// Parsed problem spec document; field-for-field serializable back to text.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpecDocument {
    pub t_end: f64,
    pub n_points: usize,
    pub lambda: f64,
    pub x0: f64,
    pub y0: f64,
    pub b: TimePoly,
    pub f1: ScalarField2,
    pub f2: ScalarField2,
    pub g: ScalarField2,
    pub p: ScalarField2,
    pub hyp_l: f64,
    pub hyp_k: f64,
    pub contraction_k: f64,
    pub h_l1: f64,
    pub lower: Option<(LowerSpec, LowerSpec)>,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub direction: Direction,
    pub slack: f64,
    pub record_full_iterates: bool,
    pub audit_trials: usize,
    pub audit_seed: u64,
}

impl ProblemSpecDocument {
    /// Build the instance, optionally overriding the grid resolution (used
    /// by grid studies). A tabulated lower solution cannot be resampled, so
    /// overrides reject it.
    pub fn to_instance(&self, n_override: Option<usize>) -> Result<ProblemInstance, SpecError> {
        let n = n_override.unwrap_or(self.n_points);
        let grid = Grid::new(self.t_end, n)
            .map_err(|e| SpecError::invalid(format!("grid: {e}")))?;
        let lower = match &self.lower {
            None => None,
            Some((u, v)) => {
                let tabulated =
                    matches!(u, LowerSpec::Table(_)) || matches!(v, LowerSpec::Table(_));
                if n_override.is_some() && n != self.n_points && tabulated {
                    return Err(SpecError::invalid(
                        "tabulated lower solutions cannot be resampled onto study grids",
                    ));
                }
                Some(LowerPair {
                    u: u.to_grid_function(grid)?,
                    v: v.to_grid_function(grid)?,
                })
            }
        };
        Ok(ProblemInstance {
            lambda: self.lambda,
            grid,
            b: self.b.clone(),
            f1: self.f1.clone(),
            f2: self.f2.clone(),
            g: self.g.clone(),
            p: self.p.clone(),
            x0: self.x0,
            y0: self.y0,
            hyp_l: self.hyp_l,
            hyp_k: self.hyp_k,
            contraction_k: self.contraction_k,
            g_bound: self.h_l1,
            singularity_floor: DEFAULT_SINGULARITY_FLOOR,
            lower,
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            tol_outer: self.tol_outer,
            max_outer: self.max_outer,
            monotonicity_slack: self.slack,
            direction: self.direction,
            record_full_iterates: self.record_full_iterates,
        }
    }
}

impl fmt::Display for ProblemSpecDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[grid]")?;
        writeln!(f, "t_end = {}", self.t_end)?;
        writeln!(f, "n_points = {}", self.n_points)?;
        writeln!(f)?;
        writeln!(f, "[equation]")?;
        writeln!(f, "lambda = {}", self.lambda)?;
        writeln!(f, "x0 = {}", self.x0)?;
        writeln!(f, "y0 = {}", self.y0)?;
        writeln!(f)?;
        writeln!(f, "[fields]")?;
        writeln!(f, "b = {}", self.b)?;
        writeln!(f, "f1 = {}", self.f1)?;
        writeln!(f, "f2 = {}", self.f2)?;
        writeln!(f, "g = {}", self.g)?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f)?;
        writeln!(f, "[constants]")?;
        writeln!(f, "L = {}", self.hyp_l)?;
        writeln!(f, "K = {}", self.hyp_k)?;
        writeln!(f, "k = {}", self.contraction_k)?;
        writeln!(f, "h_l1 = {}", self.h_l1)?;
        if let Some((u, v)) = &self.lower {
            writeln!(f)?;
            writeln!(f, "[lower]")?;
            writeln!(f, "u = {}", u.render())?;
            writeln!(f, "v = {}", v.render())?;
        }
        writeln!(f)?;
        writeln!(f, "[engine]")?;
        writeln!(f, "tol_outer = {}", self.tol_outer)?;
        writeln!(f, "max_outer = {}", self.max_outer)?;
        writeln!(
            f,
            "direction = {}",
            match self.direction {
                Direction::FromLower => "from_lower",
                Direction::FromUpper => "from_upper",
            }
        )?;
        writeln!(f, "slack = {}", self.slack)?;
        writeln!(f, "record_full_iterates = {}", self.record_full_iterates)?;
        writeln!(f)?;
        writeln!(f, "[audit]")?;
        writeln!(f, "trials = {}", self.audit_trials)?;
        writeln!(f, "rng_seed = {}", self.audit_seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecError {
    /// 1-based line and column when the error has a location.
    pub position: Option<(usize, usize)>,
    pub msg: String,
}

impl SpecError {
    fn at(line: usize, col: usize, msg: impl Into<String>) -> Self {
        SpecError {
            position: Some((line, col)),
            msg: msg.into(),
        }
    }

    fn invalid(msg: impl Into<String>) -> Self {
        SpecError {
            position: None,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, col)) => write!(f, "line {line}, column {col}: {}", self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for SpecError {}

struct RawEntry {
    key: String,
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

struct Section {
    entries: Vec<RawEntry>,
    line: usize,
    taken: HashSet<String>,
}

const KNOWN_SECTIONS: &[&str] = &[
    "grid", "equation", "fields", "constants", "lower", "engine", "audit",
];

fn parse_raw(text: &str) -> Result<Vec<(String, Section)>, SpecError> {
    let mut sections: Vec<(String, Section)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let without_comment = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = without_comment.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| SpecError::at(line_no, 1, "unterminated section header"))?
                .trim()
                .to_string();
            if !KNOWN_SECTIONS.contains(&name.as_str()) {
                return Err(SpecError::at(line_no, 1, format!("unknown section [{name}]")));
            }
            if sections.iter().any(|(n, _)| *n == name) {
                return Err(SpecError::at(line_no, 1, format!("duplicate section [{name}]")));
            }
            sections.push((
                name,
                Section {
                    entries: Vec::new(),
                    line: line_no,
                    taken: HashSet::new(),
                },
            ));
            continue;
        }
        let eq = trimmed.find('=').ok_or_else(|| {
            SpecError::at(line_no, 1, "expected 'key = value' or a section header")
        })?;
        let key = trimmed[..eq].trim().to_string();
        let value = trimmed[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(SpecError::at(line_no, 1, "empty key"));
        }
        let key_col = without_comment.find(key.as_str()).unwrap_or(0) + 1;
        let value_col = if value.is_empty() {
            without_comment.len() + 1
        } else {
            without_comment.rfind(value.as_str()).unwrap_or(0) + 1
        };
        let (_, section) = sections.last_mut().ok_or_else(|| {
            SpecError::at(line_no, key_col, format!("key '{key}' outside any section"))
        })?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(SpecError::at(line_no, key_col, format!("duplicate key '{key}'")));
        }
        section.entries.push(RawEntry {
            key,
            value,
            line: line_no,
            key_col,
            value_col,
        });
    }
    Ok(sections)
}

struct Reader<'a> {
    name: &'static str,
    section: Option<&'a mut Section>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, key: &str) -> Option<&RawEntry> {
        let section = self.section.as_mut()?;
        section.taken.insert(key.to_string());
        section.entries.iter().find(|e| e.key == key)
    }

    fn required(&mut self, key: &str) -> Result<&RawEntry, SpecError> {
        let name = self.name;
        if self.section.is_none() {
            return Err(SpecError::invalid(format!("missing section [{name}]")));
        }
        match self.take(key) {
            Some(e) => Ok(e),
            None => Err(SpecError::invalid(format!(
                "missing key '{key}' in section [{name}]"
            ))),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64, SpecError> {
        let entry = self.required(key)?;
        parse_number(entry)
    }

    fn opt_number(&mut self, key: &str, default: f64) -> Result<f64, SpecError> {
        match self.take(key) {
            Some(entry) => parse_number(entry),
            None => Ok(default),
        }
    }

    fn opt_integer(&mut self, key: &str, default: u64) -> Result<u64, SpecError> {
        match self.take(key) {
            Some(entry) => entry.value.parse::<u64>().map_err(|_| {
                SpecError::at(entry.line, entry.value_col, format!("invalid integer '{}'", entry.value))
            }),
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<(), SpecError> {
        if let Some(section) = self.section {
            for e in &section.entries {
                if !section.taken.contains(&e.key) {
                    return Err(SpecError::at(
                        e.line,
                        e.key_col,
                        format!("unknown key '{}' in section [{}]", e.key, self.name),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn parse_number(entry: &RawEntry) -> Result<f64, SpecError> {
    let v: f64 = entry.value.parse().map_err(|_| {
        SpecError::at(entry.line, entry.value_col, format!("invalid number '{}'", entry.value))
    })?;
    if !v.is_finite() {
        return Err(SpecError::at(entry.line, entry.value_col, "number must be finite"));
    }
    Ok(v)
}

fn parse_expr<T>(entry: &RawEntry) -> Result<T, SpecError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    entry.value.parse::<T>().map_err(|e| {
        SpecError::at(entry.line, entry.value_col, format!("{e}"))
    })
}

fn parse_lower_value(entry: &RawEntry) -> Result<LowerSpec, SpecError> {
    let value = entry.value.trim();
    if let Some(body) = value.strip_prefix("tab(").and_then(|s| s.strip_suffix(')')) {
        let mut out = Vec::new();
        for piece in body.split(',') {
            let v: f64 = piece.trim().parse().map_err(|_| {
                SpecError::at(entry.line, entry.value_col, format!("invalid table entry '{piece}'"))
            })?;
            out.push(v);
        }
        return Ok(LowerSpec::Table(out));
    }
    let c: f64 = value.parse().map_err(|_| {
        SpecError::at(
            entry.line,
            entry.value_col,
            "lower values are a number or tab(v0,v1,...)",
        )
    })?;
    Ok(LowerSpec::Constant(c))
}

pub fn parse_document(text: &str) -> Result<ProblemSpecDocument, SpecError> {
    let mut sections = parse_raw(text)?;
    let mut grid = take_section(&mut sections, "grid");
    let mut equation = take_section(&mut sections, "equation");
    let mut fields = take_section(&mut sections, "fields");
    let mut constants = take_section(&mut sections, "constants");
    let mut lower = take_section(&mut sections, "lower");
    let mut engine = take_section(&mut sections, "engine");
    let mut audit = take_section(&mut sections, "audit");

    let mut grid_r = Reader { name: "grid", section: grid.as_mut() };
    let t_end = grid_r.number("t_end")?;
    let n_points_entry = grid_r.required("n_points")?;
    let n_points: usize = n_points_entry.value.parse().map_err(|_| {
        SpecError::at(
            n_points_entry.line,
            n_points_entry.value_col,
            format!("invalid node count '{}'", n_points_entry.value),
        )
    })?;
    grid_r.finish()?;

    let mut eq_r = Reader { name: "equation", section: equation.as_mut() };
    let lambda = eq_r.number("lambda")?;
    let x0 = eq_r.number("x0")?;
    let y0 = eq_r.number("y0")?;
    eq_r.finish()?;

    let mut f_r = Reader { name: "fields", section: fields.as_mut() };
    let b: TimePoly = parse_expr(f_r.required("b")?)?;
    let f1: ScalarField2 = parse_expr(f_r.required("f1")?)?;
    let f2: ScalarField2 = parse_expr(f_r.required("f2")?)?;
    let g: ScalarField2 = parse_expr(f_r.required("g")?)?;
    let p: ScalarField2 = parse_expr(f_r.required("p")?)?;
    f_r.finish()?;

    let mut c_r = Reader { name: "constants", section: constants.as_mut() };
    let hyp_l = c_r.number("L")?;
    let hyp_k = c_r.number("K")?;
    let contraction_k = c_r.number("k")?;
    let h_l1 = c_r.number("h_l1")?;
    c_r.finish()?;

    let lower_pair = if lower.is_some() {
        let mut l_r = Reader { name: "lower", section: lower.as_mut() };
        let u = parse_lower_value(l_r.required("u")?)?;
        let v = parse_lower_value(l_r.required("v")?)?;
        l_r.finish()?;
        Some((u, v))
    } else {
        None
    };

    let mut e_r = Reader { name: "engine", section: engine.as_mut() };
    let tol_outer = e_r.opt_number("tol_outer", 1e-10)?;
    let max_outer = e_r.opt_integer("max_outer", 200)? as usize;
    let direction = match e_r.take("direction") {
        Some(entry) => match entry.value.as_str() {
            "from_lower" => Direction::FromLower,
            "from_upper" => Direction::FromUpper,
            other => {
                return Err(SpecError::at(
                    entry.line,
                    entry.value_col,
                    format!("direction must be from_lower or from_upper, got '{other}'"),
                ))
            }
        },
        None => Direction::FromLower,
    };
    let slack = e_r.opt_number("slack", 0.0)?;
    let record_full_iterates = match e_r.take("record_full_iterates") {
        Some(entry) => entry.value.parse::<bool>().map_err(|_| {
            SpecError::at(entry.line, entry.value_col, "expected true or false")
        })?,
        None => false,
    };
    e_r.finish()?;

    let mut a_r = Reader { name: "audit", section: audit.as_mut() };
    let audit_trials = a_r.opt_integer("trials", 32)? as usize;
    let audit_seed = a_r.opt_integer("rng_seed", 42)?;
    a_r.finish()?;

    if let Some((name, section)) = sections.first() {
        return Err(SpecError::at(section.line, 1, format!("unexpected section [{name}]")));
    }

    Ok(ProblemSpecDocument {
        t_end,
        n_points,
        lambda,
        x0,
        y0,
        b,
        f1,
        f2,
        g,
        p,
        hyp_l,
        hyp_k,
        contraction_k,
        h_l1,
        lower: lower_pair,
        tol_outer,
        max_outer,
        direction,
        slack,
        record_full_iterates,
        audit_trials,
        audit_seed,
    })
}

fn take_section(sections: &mut Vec<(String, Section)>, name: &str) -> Option<Section> {
    let idx = sections.iter().position(|(n, _)| n == name)?;
    Some(sections.remove(idx).1)
}
