//! Serialisable reports shared by the command line and the Python binding.
//!
//! Every quantity is in physical units (volts, amperes, watts) regardless of
//! the unit system of the input case. JSON reports carry the schema tag
//! [`SCHEMA`]; the CSV layouts are fixed by the `*_HEADER` constants.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::netmodel::{NetworkCase, Port, Unit};
use crate::pf_oracle::{convert_solution, PfSolution};
use crate::relaxbuild::ObjectiveSpec;
use crate::stba::{ExactnessMetrics, HorizonReport, Lambda, OpfSolution, StbaStatus, StbaTrace, TraceEntry};

pub const SCHEMA: &str = "bdcdn-report-1";

pub const NODE_CSV_HEADER: &str = "node,u_plus,u_neutral,u_minus,vuf";
pub const HORIZON_CSV_HEADER: &str = "t,node,u_plus,u_neutral,u_minus,vuf";
pub const TRACE_CSV_HEADER: &str =
    "k,lambda,lambda_w,lambda_v,bound_width,objective,solver_status,solver_iterations,recentred,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    PowerFlow,
    Opf,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node: usize,
    pub u_plus: f64,
    pub u_neutral: f64,
    pub u_minus: f64,
    pub vuf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    /// Upstream (slack side) node id.
    pub from: usize,
    pub to: usize,
    /// `[+, o, -]`
    pub current: [f64; 3],
    pub power: [f64; 3],
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgRow {
    pub node: usize,
    pub port: Port,
    pub power: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbRow {
    pub node: usize,
    pub slack: bool,
    /// Output on ports `p` and `n`.
    pub power: [f64; 2],
}

/// Weighted objective terms; `dg_cost + loss_cost + vb_cost == total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dg_cost: f64,
    pub loss_cost: f64,
    pub vb_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub final_lambda: f64,
    pub seconds: f64,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfReport {
    pub schema: String,
    pub kind: ReportKind,
    pub case: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
    pub nodes: Vec<NodeRow>,
    pub branches: Vec<BranchRow>,
    pub dg: Vec<DgRow>,
    pub vb: Vec<VbRow>,
    /// Ohmic loss over all conductors, W.
    pub loss: f64,
    /// Loss of the power flow without optimisation, W.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_before: Option<f64>,
    pub max_vuf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Breakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Lambda>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exactness: Option<ExactnessMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl OpfReport {
    /// Zeroes every wall-clock field so two runs compare byte for byte.
    pub fn strip_timing(&mut self) {
        if let Some(t) = &mut self.trace {
            t.seconds = 0.0;
            t.entries.iter_mut().for_each(|e| e.seconds = 0.0);
        }
    }

    /// Whether the breakdown adds up to its total within `tol`.
    pub fn breakdown_consistent(&self, tol: f64) -> bool {
        self.objective
            .as_ref()
            .is_none_or(|b| (b.dg_cost + b.loss_cost + b.vb_cost - b.total).abs() <= tol)
    }
}

fn state_rows(case: &NetworkCase, pf: &PfSolution) -> (Vec<NodeRow>, Vec<BranchRow>, f64) {
    let pf = convert_solution(pf, Unit::Si);
    let nodes = case
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let [u_plus, u_neutral, u_minus] = pf.voltage[i];
            NodeRow { node: id, u_plus, u_neutral, u_minus, vuf: pf.vuf(i) }
        })
        .collect();
    let topo = case.topology().expect("solution from a valid case");
    let r_scale = match case.unit {
        Unit::Si => 1.0,
        Unit::Pu => case.bases.impedance(),
    };
    let branches = (0..topo.n_branches())
        .map(|k| {
            let r = case.branches[k].r * r_scale;
            let current = pf.branch_current[k];
            BranchRow {
                from: case.nodes[topo.up[k]],
                to: case.nodes[topo.down[k]],
                current,
                power: pf.branch_power[k],
                loss: current.iter().map(|i| i * i * r).sum(),
            }
        })
        .collect::<Vec<_>>();
    let max_vuf = pf.max_vuf();
    (nodes, branches, max_vuf)
}

fn dispatch_rows(case: &NetworkCase, pf: &PfSolution) -> (Vec<DgRow>, Vec<VbRow>) {
    let pf = convert_solution(pf, Unit::Si);
    let p_scale = match case.unit {
        Unit::Si => 1.0,
        Unit::Pu => case.bases.power,
    };
    let dg = case
        .dgs
        .iter()
        .zip(&pf.dispatch.dg)
        .map(|(g, &p)| DgRow { node: g.node, port: g.port, power: p, capacity: g.p_max * p_scale })
        .collect();
    let vb = case
        .vbs
        .iter()
        .zip(&pf.dispatch.vb)
        .map(|(v, &power)| VbRow { node: v.node, slack: v.node == case.slack.node, power })
        .collect();
    (dg, vb)
}

fn empty(kind: ReportKind, case: &NetworkCase, snapshot: Option<&str>, status: &str) -> OpfReport {
    OpfReport {
        schema: SCHEMA.into(),
        kind,
        case: case.name.clone(),
        snapshot: snapshot.map(str::to_string),
        status: status.into(),
        certified: None,
        nodes: Vec::new(),
        branches: Vec::new(),
        dg: Vec::new(),
        vb: Vec::new(),
        loss: 0.0,
        loss_before: None,
        max_vuf: 0.0,
        objective: None,
        oracle_objective: None,
        lambda: None,
        exactness: None,
        max_residual: None,
        trace: None,
        warnings: Vec::new(),
    }
}

/// Report of a plain power flow.
pub fn pf_report(case: &NetworkCase, snapshot: Option<&str>, pf: &PfSolution) -> OpfReport {
    let mut rep = empty(ReportKind::PowerFlow, case, snapshot, "solved");
    let (nodes, branches, max_vuf) = state_rows(case, pf);
    let (dg, vb) = dispatch_rows(case, pf);
    rep.loss = branches.iter().map(|b| b.loss).sum();
    rep.nodes = nodes;
    rep.branches = branches;
    rep.max_vuf = max_vuf;
    rep.dg = dg;
    rep.vb = vb;
    rep
}

pub fn status_name(status: StbaStatus) -> &'static str {
    match status {
        StbaStatus::Converged => "converged",
        StbaStatus::IterationLimit => "iteration-limit",
    }
}

/// Report of an optimisation run. `baseline` is the power flow before
/// optimisation, used for the loss comparison.
pub fn opf_report(
    case: &NetworkCase,
    snapshot: Option<&str>,
    obj: &ObjectiveSpec,
    sol: &OpfSolution,
    trace: &StbaTrace,
    baseline: Option<&PfSolution>,
) -> OpfReport {
    let mut rep = empty(ReportKind::Opf, case, snapshot, status_name(sol.status));
    if let Some(pf) = &sol.oracle {
        let (nodes, branches, max_vuf) = state_rows(case, pf);
        let (dg, vb) = dispatch_rows(case, pf);
        rep.loss = branches.iter().map(|b| b.loss).sum();
        rep.nodes = nodes;
        rep.branches = branches;
        rep.max_vuf = max_vuf;
        rep.dg = dg;
        rep.vb = vb;
    }
    rep.loss_before = baseline.map(|pf| state_rows(case, pf).1.iter().map(|b| b.loss).sum());
    let [dg_cost, loss_cost, vb_cost] = sol.objective_parts;
    rep.objective = Some(Breakdown {
        alpha: obj.alpha,
        beta: obj.beta,
        gamma: obj.gamma,
        dg_cost,
        loss_cost,
        vb_cost,
        total: sol.objective,
    });
    rep.certified = Some(sol.is_certified());
    rep.oracle_objective = sol.oracle_objective;
    rep.lambda = Some(sol.lambda);
    rep.exactness = Some(sol.exactness);
    rep.max_residual = sol.certificate.as_ref().map(|c| c.max_residual);
    rep.trace = Some(TraceSummary {
        iterations: trace.entries.len(),
        final_lambda: trace.entries.last().map_or(0.0, |e| e.lambda),
        seconds: trace.total_seconds(),
        entries: trace.entries.clone(),
    });
    rep.warnings = sol.warnings.clone();
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<OpfReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Largest deviation from nominal per pole `[+, o, -]`, pu.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAggregate {
    pub total_objective: f64,
    pub max_vuf: f64,
    pub max_deviation: [f64; 3],
    pub certified: usize,
    pub failed: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonOpfReport {
    pub schema: String,
    pub kind: ReportKind,
    pub case: String,
    pub steps: Vec<HorizonRow>,
    pub aggregate: HorizonAggregate,
}

impl HorizonOpfReport {
    pub fn strip_timing(&mut self) {
        self.aggregate.seconds = 0.0;
        for s in &mut self.steps {
            if let Some(r) = &mut s.report {
                r.strip_timing();
            }
        }
    }
}

pub fn horizon_report(case: &NetworkCase, obj: &ObjectiveSpec, h: &HorizonReport) -> HorizonOpfReport {
    let steps = h
        .steps
        .iter()
        .map(|s| HorizonRow {
            t: s.t,
            report: s.solution.as_ref().map(|sol| {
                let trace = s.trace.clone().unwrap_or_default();
                opf_report(case, Some(&format!("t={}", s.t)), obj, sol, &trace, None)
            }),
            error: s.error.clone(),
            max_deviation: s.max_deviation.iter().all(|d| d.is_finite()).then_some(s.max_deviation),
        })
        .collect();
    HorizonOpfReport {
        schema: SCHEMA.into(),
        kind: ReportKind::Horizon,
        case: case.name.clone(),
        steps,
        aggregate: HorizonAggregate {
            total_objective: h.total_objective,
            max_vuf: h.max_vuf,
            max_deviation: h.max_deviation,
            certified: h.certified,
            failed: h.failed.clone(),
            seconds: h.seconds,
        },
    }
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports serialise")
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> serde_json::Result<T> {
    serde_json::from_str(text)
}

fn push_node(out: &mut String, n: &NodeRow) {
    let _ = writeln!(out, "{},{},{},{},{}", n.node, n.u_plus, n.u_neutral, n.u_minus, n.vuf);
}

/// One line per node under [`NODE_CSV_HEADER`].
pub fn node_csv(report: &OpfReport) -> String {
    let mut out = format!("{NODE_CSV_HEADER}\n");
    report.nodes.iter().for_each(|n| push_node(&mut out, n));
    out
}

/// One line per timestep and node under [`HORIZON_CSV_HEADER`]. Failed
/// timesteps have no rows.
pub fn horizon_csv(report: &HorizonOpfReport) -> String {
    let mut out = format!("{HORIZON_CSV_HEADER}\n");
    for s in &report.steps {
        for n in s.report.iter().flat_map(|r| &r.nodes) {
            let _ = write!(out, "{},", s.t);
            push_node(&mut out, n);
        }
    }
    out
}

/// One line per outer iteration under [`TRACE_CSV_HEADER`].
pub fn trace_csv(trace: &StbaTrace) -> String {
    let mut out = format!("{TRACE_CSV_HEADER}\n");
    for e in &trace.entries {
        let status = format!("{:?}", e.solver_status);
        let recentred = e.recentred.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.k, e.lambda, e.lambda_w, e.lambda_v, e.bound_width, e.objective, status, e.solver_iterations, recentred, e.seconds
        );
    }
    out
}
