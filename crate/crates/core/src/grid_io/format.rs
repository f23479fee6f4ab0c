//! Line-oriented sectioned case format.
//!
//! ```text
//! BASE_MVA
//! 100
//! BUS            # id kind p_load q_load v_setpoint v_min v_max
//! 1 SLACK 0 0 1.0 0.9 1.1
//! 2 PQ 0.5 0.1 - 0.9 1.1
//! GEN            # bus p_gen p_min p_max
//! 1 0.5 0 2
//! GEN_DYNAMICS   # bus inertia_h damping_d xd_prime
//! 1 5 2 0.2
//! BRANCH         # from to r x b_shunt rating
//! 1 2 0.01 0.1 0.02 0
//! ```
//!
//! `-` stands for an absent setpoint. `GEN_DYNAMICS` rows pair with `GEN` rows
//! at the same bus in order of appearance; every generator needs one.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use super::{validate_case, Branch, Bus, BusId, BusKind, Generator, GridCase};
use crate::error::GridIoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    BaseMva,
    Bus,
    Gen,
    GenDynamics,
    Branch,
}

impl Section {
    fn from_header(s: &str) -> Option<Self> {
        Some(match s {
            "BASE_MVA" => Section::BaseMva,
            "BUS" => Section::Bus,
            "GEN" => Section::Gen,
            "GEN_DYNAMICS" => Section::GenDynamics,
            "BRANCH" => Section::Branch,
            _ => return None,
        })
    }

    fn columns(self) -> usize {
        match self {
            Section::BaseMva => 1,
            Section::Bus => 7,
            Section::Gen => 4,
            Section::GenDynamics => 4,
            Section::Branch => 6,
        }
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> GridIoError {
    GridIoError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn num(tok: &Token<'_>, line: usize) -> Result<f64, GridIoError> {
    tok.text
        .parse::<f64>()
        .map_err(|_| syntax(line, tok.column, format!("expected a number, found `{}`", tok.text)))
}

fn bus_id(tok: &Token<'_>, line: usize) -> Result<BusId, GridIoError> {
    tok.text
        .parse::<BusId>()
        .map_err(|_| syntax(line, tok.column, format!("expected a bus id, found `{}`", tok.text)))
}

struct GenRow {
    line: usize,
    bus: BusId,
    p_gen: f64,
    p_min: f64,
    p_max: f64,
}

struct DynRow {
    line: usize,
    inertia_h: f64,
    damping_d: f64,
    xd_prime: f64,
}

/// Parses and validates a case file.
pub fn parse_case(text: &str) -> Result<GridCase, GridIoError> {
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut bus_lines = Vec::new();
    let mut gens: Vec<GenRow> = Vec::new();
    let mut dyns: Vec<(BusId, DynRow)> = Vec::new();
    let mut branches = Vec::new();
    let mut branch_lines = Vec::new();

    let mut section: Option<Section> = None;
    let mut seen_sections = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokenize(content);
        if toks.is_empty() {
            continue;
        }

        let first = &toks[0];
        let looks_like_header = first
            .text
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic());
        if looks_like_header {
            let sec = Section::from_header(first.text).ok_or_else(|| {
                syntax(line, first.column, format!("unknown section `{}`", first.text))
            })?;
            if toks.len() > 1 {
                return Err(syntax(
                    line,
                    toks[1].column,
                    "section header must be on its own line",
                ));
            }
            if seen_sections.contains(&sec) {
                return Err(syntax(line, first.column, format!("duplicate section `{}`", first.text)));
            }
            seen_sections.push(sec);
            section = Some(sec);
            continue;
        }

        let Some(sec) = section else {
            return Err(syntax(line, first.column, "data before any section header"));
        };
        if toks.len() != sec.columns() {
            let col = toks.get(sec.columns()).map_or(toks.last().unwrap().column, |t| t.column);
            return Err(syntax(
                line,
                col,
                format!("expected {} columns, found {}", sec.columns(), toks.len()),
            ));
        }

        match sec {
            Section::BaseMva => {
                if base_mva.is_some() {
                    return Err(syntax(line, first.column, "BASE_MVA takes a single value"));
                }
                base_mva = Some(num(&toks[0], line)?);
            }
            Section::Bus => {
                let kind = match toks[1].text {
                    "SLACK" => BusKind::Slack,
                    "PV" => BusKind::Pv,
                    "PQ" => BusKind::Pq,
                    other => {
                        return Err(syntax(line, toks[1].column, format!("unknown bus kind `{other}`")))
                    }
                };
                let v_setpoint = if toks[4].text == "-" {
                    None
                } else {
                    Some(num(&toks[4], line)?)
                };
                buses.push(Bus {
                    id: bus_id(&toks[0], line)?,
                    kind,
                    p_load: num(&toks[2], line)?,
                    q_load: num(&toks[3], line)?,
                    v_setpoint,
                    v_min: num(&toks[5], line)?,
                    v_max: num(&toks[6], line)?,
                });
                bus_lines.push(line);
            }
            Section::Gen => gens.push(GenRow {
                line,
                bus: bus_id(&toks[0], line)?,
                p_gen: num(&toks[1], line)?,
                p_min: num(&toks[2], line)?,
                p_max: num(&toks[3], line)?,
            }),
            Section::GenDynamics => dyns.push((
                bus_id(&toks[0], line)?,
                DynRow {
                    line,
                    inertia_h: num(&toks[1], line)?,
                    damping_d: num(&toks[2], line)?,
                    xd_prime: num(&toks[3], line)?,
                },
            )),
            Section::Branch => {
                branches.push(Branch {
                    from_bus: bus_id(&toks[0], line)?,
                    to_bus: bus_id(&toks[1], line)?,
                    r: num(&toks[2], line)?,
                    x: num(&toks[3], line)?,
                    b_shunt: num(&toks[4], line)?,
                    rating: num(&toks[5], line)?,
                });
                branch_lines.push(line);
            }
        }
    }

    let base_mva = base_mva.ok_or_else(|| syntax(text.lines().count().max(1), 1, "missing BASE_MVA section"))?;

    let known: HashMap<BusId, ()> = buses.iter().map(|b| (b.id, ())).collect();
    for g in &gens {
        if !known.contains_key(&g.bus) {
            return Err(GridIoError::UnknownBus { bus: g.bus, line: g.line });
        }
    }
    for (bus, d) in &dyns {
        if !known.contains_key(bus) {
            return Err(GridIoError::UnknownBus { bus: *bus, line: d.line });
        }
    }
    for (br, &line) in branches.iter().zip(&branch_lines) {
        for id in [br.from_bus, br.to_bus] {
            if !known.contains_key(&id) {
                return Err(GridIoError::UnknownBus { bus: id, line });
            }
        }
    }

    let mut queues: HashMap<BusId, VecDeque<DynRow>> = HashMap::new();
    for (bus, d) in dyns {
        queues.entry(bus).or_default().push_back(d);
    }
    let mut generators = Vec::with_capacity(gens.len());
    for g in gens {
        let d = queues
            .get_mut(&g.bus)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| {
                syntax(g.line, 1, format!("generator at bus {} has no GEN_DYNAMICS row", g.bus))
            })?;
        generators.push(Generator {
            bus: g.bus,
            p_gen: g.p_gen,
            p_min: g.p_min,
            p_max: g.p_max,
            inertia_h: d.inertia_h,
            damping_d: d.damping_d,
            xd_prime: d.xd_prime,
        });
    }
    if let Some(extra) = queues.values().flat_map(|q| q.iter()).map(|d| d.line).min() {
        return Err(syntax(extra, 1, "GEN_DYNAMICS row without a matching GEN row"));
    }

    let case = GridCase {
        base_mva,
        buses,
        generators,
        branches,
    };
    let violations = validate_case(&case);
    if violations.is_empty() {
        Ok(case)
    } else {
        Err(GridIoError::Invalid(violations))
    }
}

/// Shortest decimal text that parses back to the identical binary value.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a case in the text format; `parse_case` reproduces it exactly.
pub fn serialize_case(case: &GridCase) -> String {
    let mut s = String::new();
    let f = fmt_f64;
    let _ = writeln!(s, "BASE_MVA\n{}", f(case.base_mva));
    let _ = writeln!(s, "BUS  # id kind p_load q_load v_setpoint v_min v_max");
    for b in &case.buses {
        let vs = b.v_setpoint.map_or_else(|| "-".to_string(), f);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            b.id,
            b.kind,
            f(b.p_load),
            f(b.q_load),
            vs,
            f(b.v_min),
            f(b.v_max)
        );
    }
    let _ = writeln!(s, "GEN  # bus p_gen p_min p_max");
    for g in &case.generators {
        let _ = writeln!(s, "{} {} {} {}", g.bus, f(g.p_gen), f(g.p_min), f(g.p_max));
    }
    let _ = writeln!(s, "GEN_DYNAMICS  # bus inertia_h damping_d xd_prime");
    for g in &case.generators {
        let _ = writeln!(s, "{} {} {} {}", g.bus, f(g.inertia_h), f(g.damping_d), f(g.xd_prime));
    }
    let _ = writeln!(s, "BRANCH  # from to r x b_shunt rating");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            br.from_bus,
            br.to_bus,
            f(br.r),
            f(br.x),
            f(br.b_shunt),
            f(br.rating)
        );
    }
    s
}
