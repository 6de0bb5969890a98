use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::profile::LoadProfile;
use super::topology::{Topology, TopologyError};
use super::{Pole, Port};

/// Schema tag carried by every case file.
pub const CASE_FORMAT: &str = "bdcdn-1";

const ZIP_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Si,
    Pu,
}

/// Per-pole `[min, max]` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleBounds {
    pub plus: [f64; 2],
    pub neutral: [f64; 2],
    pub minus: [f64; 2],
}

impl PoleBounds {
    pub fn get(&self, pole: Pole) -> [f64; 2] {
        match pole {
            Pole::Positive => self.plus,
            Pole::Neutral => self.neutral,
            Pole::Negative => self.minus,
        }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let m = |b: [f64; 2]| [f(b[0]), f(b[1])];
        PoleBounds {
            plus: m(self.plus),
            neutral: m(self.neutral),
            minus: m(self.minus),
        }
    }
}

/// Static ZIP load on one port of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipLoad {
    pub node: usize,
    pub port: Port,
    /// Power drawn at `base_voltage`.
    pub base_power: f64,
    pub z: f64,
    pub i: f64,
    pub p: f64,
    pub base_voltage: f64,
}

impl ZipLoad {
    pub fn constant_power(node: usize, port: Port, power: f64, base_voltage: f64) -> Self {
        ZipLoad {
            node,
            port,
            base_power: power,
            z: 0.0,
            i: 0.0,
            p: 1.0,
            base_voltage,
        }
    }

    /// Power drawn at port voltage `u`.
    pub fn power_at(&self, u: f64) -> f64 {
        let x = u / self.base_voltage;
        self.base_power * (self.z * x * x + self.i * x + self.p)
    }

    /// d(power)/du at port voltage `u`.
    pub fn dpower_du(&self, u: f64) -> f64 {
        self.base_power * (2.0 * self.z * u / (self.base_voltage * self.base_voltage)
            + self.i / self.base_voltage)
    }

    pub fn is_constant_power(&self) -> bool {
        self.z == 0.0 && self.i == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Per-conductor resistance, identical on all three conductors.
    pub r: f64,
    pub current_bounds: PoleBounds,
}

/// Dispatchable generator on one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgSpec {
    pub node: usize,
    pub port: Port,
    pub p_min: f64,
    pub p_max: f64,
    /// $/kW
    pub unit_cost: f64,
}

/// Voltage balancer. At the slack node it fixes the reference voltages and
/// its output is the slack supply; elsewhere it is a costed injection on
/// ports `p` and `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbSpec {
    pub node: usize,
    /// Per-port capacity (`p` and `n`).
    pub capacity: f64,
    /// $/kW^2h
    pub a: f64,
    /// $/kWh
    pub b: f64,
    /// $
    pub c: f64,
    pub u_ps: f64,
    pub u_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub node: usize,
    pub u_plus: f64,
    pub u_neutral: f64,
    pub u_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Voltage band of the positive pole, volts.
    pub u_plus: [f64; 2],
    /// Voltage band of the negative pole, volts (both entries negative).
    pub u_minus: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_neutral: Option<[f64; 2]>,
    /// Voltage unbalance limit as a fraction.
    pub unbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    /// Pole-to-neutral nominal voltage.
    pub voltage: f64,
    /// Rated power.
    pub power: f64,
}

impl Bases {
    pub fn impedance(&self) -> f64 {
        self.voltage * self.voltage / self.power
    }

    pub fn current(&self) -> f64 {
        self.power / self.voltage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub format: String,
    pub name: String,
    #[serde(default)]
    pub unit: Unit,
    pub nodes: Vec<usize>,
    pub slack: Slack,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: Vec<ZipLoad>,
    #[serde(default)]
    pub dgs: Vec<DgSpec>,
    #[serde(default)]
    pub vbs: Vec<VbSpec>,
    pub limits: Limits,
    pub bases: Bases,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<LoadProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl NetworkCase {
    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    pub fn topology(&self) -> Result<Topology, TopologyError> {
        Topology::build(self)
    }

    pub fn vb_at_slack(&self) -> Option<usize> {
        self.vbs.iter().position(|v| v.node == self.slack.node)
    }

    /// Total port load at the case's nominal voltages.
    pub fn total_base_load(&self) -> f64 {
        self.loads.iter().map(|l| l.base_power).sum()
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.code, self.location, self.message)
    }
}

fn diag(code: &'static str, location: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        code,
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid case: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Semantic(Vec<Diagnostic>),
}

/// Parses and validates a case file.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let diagnostics = validate(&case);
    if diagnostics.is_empty() {
        Ok(case)
    } else {
        Err(CaseError::Semantic(diagnostics))
    }
}

pub fn serialize_case(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialisation is infallible")
}

/// Checks every case invariant. An empty list means the case is valid.
pub fn validate(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if case.format != CASE_FORMAT {
        out.push(diag(
            "format",
            "format",
            format!("expected \"{CASE_FORMAT}\", found \"{}\"", case.format),
        ));
    }

    let mut seen = BTreeSet::new();
    for &n in &case.nodes {
        if !seen.insert(n) {
            out.push(diag("duplicate node", format!("node {n}"), "node listed twice"));
        }
    }
    let known = |id: usize| seen.contains(&id);

    if !known(case.slack.node) {
        out.push(diag(
            "unknown node",
            "slack",
            format!("unknown node {}", case.slack.node),
        ));
    }
    let s = &case.slack;
    let scale = s.u_plus.abs().max(s.u_minus.abs()).max(1e-300);
    if !(s.u_plus > 0.0) || (s.u_plus + s.u_minus).abs() > 1e-12 * scale || s.u_neutral != 0.0 {
        out.push(diag(
            "asymmetric slack reference",
            "slack",
            format!(
                "asymmetric slack reference: need U+ = -U- > 0 and Uo = 0, got ({}, {}, {})",
                s.u_plus, s.u_neutral, s.u_minus
            ),
        ));
    }

    let mut branch_refs_ok = true;
    for (k, br) in case.branches.iter().enumerate() {
        let loc = format!("branch {k} ({}-{})", br.from, br.to);
        for end in [br.from, br.to] {
            if !known(end) {
                out.push(diag("unknown node", loc.clone(), format!("unknown node {end}")));
                branch_refs_ok = false;
            }
        }
        if br.from == br.to {
            out.push(diag("self loop", loc.clone(), "branch connects a node to itself"));
            branch_refs_ok = false;
        }
        if !(br.r > 0.0) {
            out.push(diag(
                "nonpositive resistance",
                loc.clone(),
                format!("resistance must be positive, got {}", br.r),
            ));
        }
        for pole in Pole::ALL {
            let [lo, hi] = br.current_bounds.get(pole);
            if !(lo <= hi) {
                out.push(diag(
                    "inverted current bounds",
                    format!("{loc} pole {}", pole.symbol()),
                    format!("min {lo} exceeds max {hi}"),
                ));
            }
        }
    }

    if branch_refs_ok && out.iter().all(|d| d.code != "duplicate node") && known(case.slack.node) {
        match Topology::build(case) {
            Ok(_) => {}
            Err(TopologyError::Disconnected(nodes)) => out.push(diag(
                "graph not connected",
                "branches",
                format!("graph not connected: unreachable nodes {nodes:?}"),
            )),
            Err(TopologyError::NotRadial { branch }) => out.push(diag(
                "graph not radial",
                format!("branch {branch}"),
                "graph not radial: branch closes a loop",
            )),
            Err(e) => out.push(diag("topology", "branches", e.to_string())),
        }
    }

    for (k, l) in case.loads.iter().enumerate() {
        let loc = format!("load {k} (node {}, port {})", l.node, l.port.name());
        if !known(l.node) {
            out.push(diag("unknown node", loc.clone(), format!("unknown node {}", l.node)));
        }
        if l.node == case.slack.node {
            out.push(diag("load at slack", loc.clone(), "loads are not allowed at the slack node"));
        }
        let sum = l.z + l.i + l.p;
        if (sum - 1.0).abs() > ZIP_SUM_TOL {
            out.push(diag(
                "zip sum",
                loc.clone(),
                format!("ZIP coefficients sum {}", (sum * 1e9).round() / 1e9),
            ));
        }
        if !(l.base_power >= 0.0) {
            out.push(diag("negative load", loc.clone(), "base power must be nonnegative"));
        }
        if !(l.base_voltage > 0.0) {
            out.push(diag("base voltage", loc, "base voltage must be positive"));
        }
    }

    for (k, g) in case.dgs.iter().enumerate() {
        let loc = format!("dg {k} (node {}, port {})", g.node, g.port.name());
        if !known(g.node) {
            out.push(diag("unknown node", loc.clone(), format!("unknown node {}", g.node)));
        }
        if g.node == case.slack.node {
            out.push(diag("dg at slack", loc.clone(), "generators are not allowed at the slack node"));
        }
        if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
            out.push(diag(
                "dg bounds",
                loc,
                format!("need 0 <= min <= max, got [{}, {}]", g.p_min, g.p_max),
            ));
        }
    }

    let mut vb_nodes = BTreeSet::new();
    for (k, v) in case.vbs.iter().enumerate() {
        let loc = format!("vb {k} (node {})", v.node);
        if !known(v.node) {
            out.push(diag("unknown node", loc.clone(), format!("unknown node {}", v.node)));
        }
        if !vb_nodes.insert(v.node) {
            out.push(diag("duplicate vb", loc.clone(), "two balancers on one node"));
        }
        if !(v.capacity >= 0.0) {
            out.push(diag("vb capacity", loc.clone(), "capacity must be nonnegative"));
        }
        if !(v.a >= 0.0) {
            out.push(diag("vb cost", loc, "quadratic cost coefficient must be nonnegative"));
        }
    }

    let lim = &case.limits;
    if !(lim.u_plus[0] > 0.0 && lim.u_plus[0] <= lim.u_plus[1]) {
        out.push(diag(
            "voltage band",
            "limits.u_plus",
            format!("need 0 < min <= max, got {:?}", lim.u_plus),
        ));
    }
    if !(lim.u_minus[0] <= lim.u_minus[1] && lim.u_minus[1] < 0.0) {
        out.push(diag(
            "voltage band",
            "limits.u_minus",
            format!("need min <= max < 0, got {:?}", lim.u_minus),
        ));
    }
    if let Some(n) = lim.u_neutral {
        if !(n[0] <= n[1]) {
            out.push(diag("voltage band", "limits.u_neutral", "min exceeds max"));
        }
    }
    if !(lim.unbalance > 0.0 && lim.unbalance < 1.0) {
        out.push(diag(
            "unbalance limit",
            "limits.unbalance",
            format!("must lie in (0, 1), got {}", lim.unbalance),
        ));
    }
    if !(case.bases.voltage > 0.0 && case.bases.power > 0.0) {
        out.push(diag("bases", "bases", "bases must be positive"));
    }
    if let Some(profile) = &case.profile {
        for msg in profile.problems() {
            out.push(diag("profile", "profile", msg));
        }
    }
    out
}
