//! Grid case model, text format, validation and graph construction.

mod format;
mod graph;

use std::collections::HashMap;
use std::fmt;

pub use format::fmt_f64;
pub use format::{parse_case, serialize_case};
pub use graph::{build_graph, GridGraph};

/// External bus label as written in case files.
pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "SLACK",
            BusKind::Pv => "PV",
            BusKind::Pq => "PQ",
        }
    }
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All quantities per-unit on the case base.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    /// Only meaningful for PV and slack buses.
    pub v_setpoint: Option<f64>,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub p_gen: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Inertia constant in seconds.
    pub inertia_h: f64,
    pub damping_d: f64,
    pub xd_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
    /// Apparent-power limit; zero means unlimited.
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

/// A broken case invariant. `field` locates the offending record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(field: impl Into<String>, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        rule: rule.into(),
    }
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to dense 0-based index (file order).
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Endpoints of every branch as dense indices. Panics on dangling ids, so
    /// only call on validated cases.
    pub fn branch_endpoints(&self) -> Vec<(usize, usize)> {
        let idx = self.bus_index();
        self.branches
            .iter()
            .map(|br| (idx[&br.from_bus], idx[&br.to_bus]))
            .collect()
    }

    /// Dense bus index of every generator.
    pub fn generator_buses(&self) -> Vec<usize> {
        let idx = self.bus_index();
        self.generators.iter().map(|g| idx[&g.bus]).collect()
    }

    /// Scheduled generation per bus (sum over generators at the bus).
    pub fn scheduled_generation(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.buses.len()];
        for (g, &b) in self.generators.iter().zip(&self.generator_buses()) {
            p[b] += g.p_gen;
        }
        p
    }
}

/// Checks every case invariant. An empty list means the case is valid.
pub fn validate_case(case: &GridCase) -> Vec<Violation> {
    let mut out = Vec::new();

    if !(case.base_mva.is_finite() && case.base_mva > 0.0) {
        out.push(violation("base_mva", "base_mva must be finite and > 0"));
    }

    let n_slack = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .count();
    if n_slack != 1 {
        out.push(violation(
            "bus.kind",
            format!("exactly one SLACK bus required, found {n_slack}"),
        ));
    }

    let mut seen = HashMap::new();
    for (i, b) in case.buses.iter().enumerate() {
        if let Some(prev) = seen.insert(b.id, i) {
            out.push(violation(
                format!("bus[{i}].id"),
                format!("bus id {} duplicates bus[{prev}]", b.id),
            ));
        }
        let nums = [b.p_load, b.q_load, b.v_min, b.v_max];
        if nums.iter().any(|v| !v.is_finite()) {
            out.push(violation(format!("bus {}", b.id), "values must be finite"));
        }
        if !(b.v_min < b.v_max) {
            out.push(violation(format!("bus {}.v_min", b.id), "v_min < v_max"));
        }
        match (b.kind, b.v_setpoint) {
            (BusKind::Pq, _) => {}
            (_, None) => out.push(violation(
                format!("bus {}.v_setpoint", b.id),
                "PV and SLACK buses need a voltage setpoint",
            )),
            (_, Some(v)) => {
                if !(v.is_finite() && v >= b.v_min && v <= b.v_max) {
                    out.push(violation(
                        format!("bus {}.v_setpoint", b.id),
                        "v_setpoint within [v_min, v_max]",
                    ));
                }
            }
        }
    }

    for (i, g) in case.generators.iter().enumerate() {
        let f = |name: &str| format!("generator[{i}].{name}");
        if !seen.contains_key(&g.bus) {
            out.push(violation(f("bus"), format!("unknown bus {}", g.bus)));
        }
        let nums = [g.p_gen, g.p_min, g.p_max, g.inertia_h, g.damping_d, g.xd_prime];
        if nums.iter().any(|v| !v.is_finite()) {
            out.push(violation(f("*"), "values must be finite"));
        }
        if !(g.inertia_h > 0.0) {
            out.push(violation(f("inertia_h"), "inertia_h > 0"));
        }
        if !(g.xd_prime > 0.0) {
            out.push(violation(f("xd_prime"), "xd_prime > 0"));
        }
        if !(g.p_min <= g.p_gen && g.p_gen <= g.p_max) {
            out.push(violation(f("p_gen"), "p_min ≤ p_gen ≤ p_max"));
        }
    }

    for (i, br) in case.branches.iter().enumerate() {
        let f = |name: &str| format!("branch[{i}].{name}");
        for (name, id) in [("from_bus", br.from_bus), ("to_bus", br.to_bus)] {
            if !seen.contains_key(&id) {
                out.push(violation(f(name), format!("unknown bus {id}")));
            }
        }
        if br.from_bus == br.to_bus {
            out.push(violation(f("to_bus"), "from_bus ≠ to_bus"));
        }
        if br.x == 0.0 {
            out.push(violation(f("x"), "x ≠ 0"));
        }
        if [br.r, br.x, br.b_shunt, br.rating]
            .iter()
            .any(|v| !v.is_finite())
        {
            out.push(violation(f("*"), "values must be finite"));
        }
        if br.rating < 0.0 {
            out.push(violation(f("rating"), "rating ≥ 0"));
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_bus() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    p_load: 0.0,
                    q_load: 0.0,
                    v_setpoint: Some(1.0),
                    v_min: 0.9,
                    v_max: 1.1,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    p_load: 0.5,
                    q_load: 0.1,
                    v_setpoint: None,
                    v_min: 0.9,
                    v_max: 1.1,
                },
            ],
            generators: vec![Generator {
                bus: 1,
                p_gen: 0.5,
                p_min: 0.0,
                p_max: 2.0,
                inertia_h: 5.0,
                damping_d: 2.0,
                xd_prime: 0.2,
            }],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                r: 0.01,
                x: 0.1,
                b_shunt: 0.02,
                rating: 0.0,
            }],
        }
    }

    #[test]
    fn valid_two_bus_has_no_violations() {
        assert!(validate_case(&two_bus()).is_empty());
    }

    #[test]
    fn zero_reactance_is_one_violation() {
        let mut c = two_bus();
        c.branches[0].x = 0.0;
        let v = validate_case(&c);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("x ≠ 0"), "{v:?}");
    }

    #[test]
    fn missing_slack_is_one_violation() {
        let mut c = two_bus();
        c.buses[0].kind = BusKind::Pv;
        let v = validate_case(&c);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("SLACK"), "{v:?}");
        assert!(v[0].rule.contains("found 0"));
    }

    #[test]
    fn dangling_and_duplicate_ids() {
        let mut c = two_bus();
        c.branches[0].to_bus = 99;
        c.generators[0].bus = 42;
        c.buses[1].id = 1;
        let v = validate_case(&c);
        let text: Vec<String> = v.iter().map(|v| v.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("unknown bus 99")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("unknown bus 42")));
        assert!(text.iter().any(|t| t.contains("duplicates")));
    }

    #[test]
    fn generator_and_bus_ranges() {
        let mut c = two_bus();
        c.generators[0].inertia_h = 0.0;
        c.generators[0].p_gen = 3.0;
        c.buses[0].v_setpoint = Some(1.2);
        let v = validate_case(&c);
        assert_eq!(v.len(), 3, "{v:?}");
    }
}
