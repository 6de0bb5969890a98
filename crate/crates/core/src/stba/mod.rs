//! Sequential bound tightening around the McCormick relaxation.
//!
//! Each outer iteration solves the relaxation over the current boxes,
//! measures the relaxation error `lambda` and, if it is above tolerance,
//! shrinks every `L` and `V` box to `[(1 - r^k) x, (1 + r^k) x]` around the
//! iterate. When a tightened program cannot be solved (the boxes shrink
//! faster than the iterate moves towards a product-consistent point, so
//! they end up excluding every such point), the boxes are rebuilt around
//! the loss-minimising flow of the model at the last good dispatch. That
//! point has `W = L V` and `P^2 = L V`, so boxes of any width around it
//! stay feasible. A converged point is mapped back to physical voltages
//! and currents and checked against the original constraints.

mod horizon;
mod recover;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conesolve::{solve, SolveStatus, SolverSettings};
use crate::netmodel::{to_per_unit, NetworkCase, Port, Unit, ZipLoad};
use crate::pf_oracle::{Dispatch, PfSolution};
use crate::relaxbuild::{build_mcsocp, build_socp, initial_bounds, BoundsSet, BuildOptions, BuiltProgram, ObjectiveSpec, RowFamily};

pub use horizon::{solve_horizon, HorizonReport, HorizonStep};
pub use recover::{candidate, certify, exactness, ori_objective, recover, Certificate, ExactnessMetrics, RecoverError, RecoveredState};

/// Rank-1 and residual tolerance for certification.
pub const CERT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StbaSettings {
    /// Relaxation-error tolerance.
    pub epsilon: f64,
    /// Shrink factor `r`; boxes use `r^k` at iteration `k`.
    pub step: f64,
    pub max_outer: usize,
    /// Floor on the denominators of `lambda` and the rank-1 gap, pu.
    pub lambda_floor: f64,
    /// Branch power below which flow counts as reversed.
    pub reverse_flow_tol: f64,
    /// Re-centre on the power flow when a tightened program fails.
    pub recentre: bool,
    pub solver: SolverSettings,
    pub build: BuildOptions,
}

impl Default for StbaSettings {
    fn default() -> Self {
        StbaSettings {
            epsilon: 1e-6,
            step: 0.02,
            max_outer: 20,
            lambda_floor: 1e-3,
            reverse_flow_tol: 1e-8,
            recentre: true,
            solver: SolverSettings {
                eps_abs: 1e-9,
                eps_rel: 1e-9,
                ..SolverSettings::default()
            },
            build: BuildOptions::default(),
        }
    }
}

impl StbaSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0) {
            return Err("epsilon must be positive".into());
        }
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err("step must lie in (0, 1)".into());
        }
        if self.max_outer < 1 {
            return Err("max_outer must be at least 1".into());
        }
        if !(self.lambda_floor > 0.0) {
            return Err("lambda_floor must be positive".into());
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StbaError {
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Build(#[from] crate::relaxbuild::BuildError),
    #[error("solver error: {0}")]
    Solver(#[from] crate::conesolve::SolveError),
    #[error("relaxation infeasible at iteration {iteration}; largest certificate weight on {binding}")]
    Infeasible { iteration: usize, binding: String },
    #[error("solver made no progress at iteration {iteration} ({status:?})")]
    SolverStalled { iteration: usize, status: SolveStatus },
    #[error(transparent)]
    Recover(#[from] RecoverError),
}

/// The two normalised gaps of the lifted products.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lambda {
    /// `max |W - L V| / W` over branches and poles
    pub w: f64,
    /// `max |v - V+ V-| / v` over nodes
    pub v: f64,
    /// Lifted values at or below zero (clamped to the floor).
    pub degenerate: usize,
}

impl Lambda {
    pub fn value(&self) -> f64 {
        self.w.max(self.v)
    }
}

/// Relaxation error of `x`, with denominators floored at `floor`.
pub fn lambda(built: &BuiltProgram, x: &[f64], floor: f64) -> Lambda {
    let vm = &built.varmap;
    let topo = &built.topology;
    let mut out = Lambda::default();
    let mut gap = |lifted: f64, prod: f64, acc: &mut f64| {
        if lifted <= 0.0 {
            out.degenerate += 1;
        }
        *acc = acc.max((lifted - prod).abs() / lifted.max(floor));
    };
    let (mut gw, mut gv) = (0.0f64, 0.0f64);
    if let Some(w) = &vm.w {
        for pole in 0..2 {
            for b in 0..topo.n_branches() {
                let prod = x[vm.l[pole][b]] * x[vm.v[pole][topo.up[b]]];
                gap(x[w[pole][b]], prod, &mut gw);
            }
        }
    }
    for i in 0..topo.n_nodes {
        if let Some(k) = vm.product[i] {
            gap(x[k], x[vm.v[0][i]] * x[vm.v[1][i]], &mut gv);
        }
    }
    out.w = gw;
    out.v = gv;
    out
}

/// Bounds after iteration `k` around `x`, intersected with `initial`.
/// Returns the new set and the number of boxes that had to be clamped.
/// `floor` is the smallest magnitude a box is scaled by (see [`shrink_bounds`]).
pub fn tighten(built: &BuiltProgram, x: &[f64], d: f64, k: u32, initial: &BoundsSet, floor: f64) -> (BoundsSet, usize) {
    shrink_bounds(built, x, d.powi(k as i32), initial, floor)
}

/// Every `L` and non-slack `V` box set to `x -+ f max(x, floor)`,
/// intersected with `initial`. With `floor` equal to the denominator floor
/// of [`lambda`], a box still bounds the normalised product gap by about
/// `f^2`, while values far below the floor do not produce boxes too thin
/// for the solver to find an interior.
pub fn shrink_bounds(built: &BuiltProgram, x: &[f64], f: f64, initial: &BoundsSet, floor: f64) -> (BoundsSet, usize) {
    let vm = &built.varmap;
    let mut out = built.bounds.clone();
    let mut clamped = 0;
    let mut shrink = |val: f64, ini: [f64; 2]| -> [f64; 2] {
        let h = f * val.abs().max(floor);
        let (a, b) = (val - h, val + h);
        let lo = a.min(b).max(ini[0]);
        let hi = a.max(b).min(ini[1]);
        if lo <= hi {
            [lo, hi]
        } else {
            clamped += 1;
            let c = val.clamp(ini[0], ini[1]);
            [(c - 0.5e-12).max(ini[0]), (c + 0.5e-12).min(ini[1])]
        }
    };
    for pole in 0..2 {
        for (b, bx) in out.l[pole].iter_mut().enumerate() {
            *bx = shrink(x[vm.l[pole][b]], initial.l[pole][b]);
        }
        for (i, bx) in out.v[pole].iter_mut().enumerate() {
            if i != built.topology.slack {
                *bx = shrink(x[vm.v[pole][i]], initial.v[pole][i]);
            }
        }
    }
    (out, clamped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub lambda: f64,
    pub lambda_w: f64,
    pub lambda_v: f64,
    /// Sum of box widths used in this iteration.
    pub bound_width: f64,
    pub objective: f64,
    pub solver_status: SolveStatus,
    pub solver_iterations: usize,
    /// Shrink factor of boxes re-centred on the power flow, if any.
    pub recentred: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StbaTrace {
    pub entries: Vec<TraceEntry>,
}

impl StbaTrace {
    pub fn total_seconds(&self) -> f64 {
        self.entries.iter().map(|e| e.seconds).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StbaStatus {
    Converged,
    /// `max_outer` reached; the best iterate is returned uncertified.
    IterationLimit,
}

/// Relaxed optimum with its recovery and certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub status: StbaStatus,
    /// Outer iteration the point comes from.
    pub iteration: usize,
    /// Relaxed point in program columns (pu).
    pub x: Vec<f64>,
    /// `V` per pole and node, pu
    pub v: [Vec<f64>; 2],
    /// `L`, `W`, `P` per pole and branch, pu (`W` empty without lifting)
    pub l: [Vec<f64>; 2],
    pub w: [Vec<f64>; 2],
    pub p: [Vec<f64>; 2],
    /// `v` per node; zero at the slack
    pub product: Vec<f64>,
    /// Boxes of the program the point solves.
    pub bounds: BoundsSet,
    /// Set-points in the units of the input case; the slack balancer entry
    /// holds the modelled slack supply.
    pub dispatch: Dispatch,
    pub objective: f64,
    /// `[DG, loss, balancer]`
    pub objective_parts: [f64; 3],
    pub lambda: Lambda,
    pub exactness: ExactnessMetrics,
    pub recovered: Option<RecoveredState>,
    pub certificate: Option<Certificate>,
    /// Power flow at the optimised dispatch, in the units of the input case.
    pub oracle: Option<PfSolution>,
    /// Objective of the oracle state (upper bound when feasible).
    pub oracle_objective: Option<f64>,
    /// Branches with reversed flow as `(pole, branch)`; `pole` 0 is `+`.
    pub reversed_branches: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl OpfSolution {
    pub fn is_certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.certified)
    }
}

fn per_unit(snapshot: &NetworkCase) -> Result<NetworkCase, StbaError> {
    match snapshot.unit {
        Unit::Pu => Ok(snapshot.clone()),
        Unit::Si => to_per_unit(snapshot).map_err(|e| StbaError::Settings(e.to_string())),
    }
}

/// Family with the largest total weight in an infeasibility certificate.
fn binding_family(built: &BuiltProgram, y: &[f64]) -> String {
    let mut acc: std::collections::BTreeMap<RowFamily, f64> = Default::default();
    for (row, &(fam, _)) in built.rows.iter().enumerate() {
        *acc.entry(fam).or_default() += y[row].abs();
    }
    acc.into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f.name().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Runs bound tightening on one snapshot.
pub fn run(
    snapshot: &NetworkCase,
    obj: &ObjectiveSpec,
    settings: &StbaSettings,
) -> Result<(OpfSolution, StbaTrace), StbaError> {
    settings.validate().map_err(StbaError::Settings)?;
    let case = per_unit(snapshot)?;
    let initial = initial_bounds(&case);
    let mut bounds = initial.clone();
    let mut trace = StbaTrace::default();
    let mut best: Option<(f64, usize, BuiltProgram, Vec<f64>)> = None;
    let mut converged = false;

    let mut last: Option<(BuiltProgram, Vec<f64>)> = None;

    for k in 1..=settings.max_outer {
        let t0 = Instant::now();
        let mut built = build_mcsocp(&case, &bounds, obj, &settings.build)?;
        let mut res = solve(&built.program, &settings.solver)?;
        let mut recentred = None;
        if !is_solved(res.status) && settings.recentre {
            if let Some((prev, px)) = &last {
                let f0 = settings.step.powi(k as i32 - 1);
                if let Some((b, r, f)) = recentre(&case, prev, px, f0, &initial, obj, settings)? {
                    log::info!("stba {k}: tightened program failed ({:?}); re-centred with factor {f:e}", res.status);
                    (built, res, recentred) = (b, r, Some(f));
                }
            }
        }
        match res.status {
            SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
            SolveStatus::PrimalInfeasible => {
                return Err(StbaError::Infeasible {
                    iteration: k,
                    binding: binding_family(&built, &res.y),
                })
            }
            status => return Err(StbaError::SolverStalled { iteration: k, status }),
        }
        let lam = lambda(&built, &res.x, settings.lambda_floor);
        trace.entries.push(TraceEntry {
            k,
            lambda: lam.value(),
            lambda_w: lam.w,
            lambda_v: lam.v,
            bound_width: built.bounds.total_width(),
            objective: built.objective(&res.x),
            solver_status: res.status,
            solver_iterations: res.iterations,
            recentred,
            seconds: t0.elapsed().as_secs_f64(),
        });
        log::debug!("stba {k}: lambda {:.3e} objective {:.6}", lam.value(), built.objective(&res.x));
        let done = lam.value() <= settings.epsilon;
        if !done {
            let (nb, clamped) = tighten(&built, &res.x, settings.step, k as u32, &initial, settings.lambda_floor);
            if clamped > 0 {
                log::warn!("stba {k}: {clamped} boxes clamped after tightening");
            }
            bounds = nb;
        }
        if best.as_ref().is_none_or(|b| lam.value() <= b.0) {
            best = Some((lam.value(), k, built.clone(), res.x.clone()));
        }
        last = Some((built, res.x));
        if done {
            converged = true;
            break;
        }
    }

    let (_, k, built, x) = best.expect("at least one iteration");
    let status = if converged { StbaStatus::Converged } else { StbaStatus::IterationLimit };
    let sol = finalize(snapshot, &built, x, k, status, settings)?;
    Ok((sol, trace))
}

fn is_solved(status: SolveStatus) -> bool {
    matches!(status, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
}

/// `case` with every generator and non-slack balancer replaced by a
/// constant-power injection at its set-point in `d` (pu). A `b`-port
/// generator is split evenly over `p` and `n`, as the relaxation does.
fn pinned_case(case: &NetworkCase, d: &Dispatch) -> NetworkCase {
    let mut out = case.clone();
    let inject = |node, port, p: f64| ZipLoad::constant_power(node, port, -p, 1.0);
    for (g, &p) in case.dgs.iter().zip(&d.dg) {
        match g.port {
            Port::B => {
                out.loads.push(inject(g.node, Port::P, 0.5 * p));
                out.loads.push(inject(g.node, Port::N, 0.5 * p));
            }
            port => out.loads.push(inject(g.node, port, p)),
        }
    }
    out.dgs.clear();
    out.vbs.clear();
    for (v, pq) in case.vbs.iter().zip(&d.vb) {
        if v.node == case.slack.node {
            out.vbs.push(v.clone());
        } else {
            out.loads.push(inject(v.node, Port::P, pq[0]));
            out.loads.push(inject(v.node, Port::N, pq[1]));
        }
    }
    out
}

/// Loss-minimising relaxed flow at the dispatch of `(prev, x)`, returned in
/// the columns of `prev` (only `L` and `V` are filled).
fn model_centre(
    case: &NetworkCase,
    prev: &BuiltProgram,
    x: &[f64],
    initial: &BoundsSet,
    settings: &StbaSettings,
) -> Result<Option<Vec<f64>>, StbaError> {
    let pinned = pinned_case(case, &prev.dispatch(x, Unit::Pu));
    let losses = ObjectiveSpec {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
        ..prev.objective_spec.clone()
    };
    let flow = build_socp(&pinned, initial, &losses, &settings.build)?;
    let res = solve(&flow.program, &settings.solver)?;
    if !is_solved(res.status) {
        log::debug!("model flow at the last dispatch did not solve ({:?})", res.status);
        return Ok(None);
    }
    let (from, to) = (&flow.varmap, &prev.varmap);
    let mut centre = vec![0.0; to.n_vars()];
    for pole in 0..2 {
        for (&a, &b) in from.l[pole].iter().zip(&to.l[pole]) {
            centre[b] = res.x[a];
        }
        for (&a, &b) in from.v[pole].iter().zip(&to.v[pole]) {
            centre[b] = res.x[a];
        }
    }
    Ok(Some(centre))
}

/// Boxes of relative half-width `f0, 10 f0, ...` around [`model_centre`];
/// the first program that solves is returned with its factor.
fn recentre(
    case: &NetworkCase,
    prev: &BuiltProgram,
    x: &[f64],
    f0: f64,
    initial: &BoundsSet,
    obj: &ObjectiveSpec,
    settings: &StbaSettings,
) -> Result<Option<(BuiltProgram, crate::conesolve::SolveResult, f64)>, StbaError> {
    let Some(centre) = model_centre(case, prev, x, initial, settings)? else {
        return Ok(None);
    };
    let mut f = f0;
    while f < 1.0 {
        let (bounds, _) = shrink_bounds(prev, &centre, f, initial, settings.lambda_floor);
        let built = build_mcsocp(case, &bounds, obj, &settings.build)?;
        let res = solve(&built.program, &settings.solver)?;
        if is_solved(res.status) {
            return Ok(Some((built, res, f)));
        }
        log::debug!("re-centred boxes with factor {f:e}: {:?}", res.status);
        f *= 10.0;
    }
    Ok(None)
}

fn finalize(
    snapshot: &NetworkCase,
    built: &BuiltProgram,
    x: Vec<f64>,
    iteration: usize,
    status: StbaStatus,
    settings: &StbaSettings,
) -> Result<OpfSolution, StbaError> {
    let vm = &built.varmap;
    let pick = |idx: &[usize]| idx.iter().map(|&j| x[j]).collect::<Vec<_>>();
    let lam = lambda(built, &x, settings.lambda_floor);
    let mut warnings = Vec::new();
    let mut reversed = Vec::new();
    for pole in 0..2 {
        for (b, &j) in vm.p[pole].iter().enumerate() {
            if x[j] < -settings.reverse_flow_tol {
                reversed.push((pole, b));
            }
        }
    }
    if !reversed.is_empty() {
        warnings.push(format!("{} branch flows reversed", reversed.len()));
    }
    if lam.degenerate > 0 {
        warnings.push(format!("{} lifted products at or below zero", lam.degenerate));
    }
    let dispatch = built.dispatch(&x, snapshot.unit);
    let mut sol = OpfSolution {
        status,
        iteration,
        v: [pick(&vm.v[0]), pick(&vm.v[1])],
        l: [pick(&vm.l[0]), pick(&vm.l[1])],
        w: vm.w.as_ref().map_or([Vec::new(), Vec::new()], |w| [pick(&w[0]), pick(&w[1])]),
        p: [pick(&vm.p[0]), pick(&vm.p[1])],
        product: vm.product.iter().map(|k| k.map_or(0.0, |k| x[k])).collect(),
        bounds: built.bounds.clone(),
        dispatch,
        objective: built.objective(&x),
        objective_parts: built.objective_parts(&x),
        lambda: lam,
        exactness: ExactnessMetrics::default(),
        recovered: None,
        certificate: None,
        oracle: None,
        oracle_objective: None,
        reversed_branches: reversed,
        warnings,
        x,
    };
    let oracle = crate::pf_oracle::solve_pf(snapshot, Some(&sol.dispatch));
    match &oracle {
        Ok(pf) => sol.oracle_objective = Some(ori_objective(snapshot, pf, &built.objective_spec)),
        Err(e) => sol.warnings.push(format!("power flow at the optimised dispatch failed: {e}")),
    }
    sol.oracle = oracle.ok();
    sol.exactness = exactness(built, &sol.x, settings.lambda_floor);
    match recover(built, &sol.x, sol.oracle.as_ref()) {
        Ok(rec) => {
            if status == StbaStatus::Converged {
                sol.certificate = Some(certify(&sol, built, &rec));
            }
            sol.recovered = Some(rec);
        }
        Err(e) if status == StbaStatus::Converged => return Err(e.into()),
        Err(e) => sol.warnings.push(format!("recovery failed: {e}")),
    }
    if status == StbaStatus::IterationLimit {
        if let Some(ub) = sol.oracle_objective {
            sol.warnings.push(format!(
                "not converged: lower bound {:.6}, oracle objective {:.6}, gap {:.3e}",
                sol.objective,
                ub,
                ub - sol.objective
            ));
        }
    }
    Ok(sol)
}
