//! Newton-Raphson power flow on the three conductors of a bipolar feeder.
//!
//! Unknowns are `(U+, Uo, U-)` at every non-slack node; equations are the
//! per-conductor current balances. The neutral is grounded at the slack
//! only, so its potential floats elsewhere and carries the unbalance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::netmodel::{
    from_per_unit, port_voltages, to_per_unit, Bases, NetworkCase, Pole, PoleValues, Port,
    PortValues, Topology, Unit,
};

pub const MISMATCH_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

/// Power set-points for the dispatchable devices, in the units of the case.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dispatch {
    /// One entry per `case.dgs`.
    pub dg: Vec<f64>,
    /// `[p, n]` per `case.vbs`. Entries for a balancer at the slack node are
    /// outputs of the solve and ignored on input.
    pub vb: Vec<[f64; 2]>,
}

impl Dispatch {
    pub fn zero(case: &NetworkCase) -> Self {
        Dispatch {
            dg: vec![0.0; case.dgs.len()],
            vb: vec![[0.0; 2]; case.vbs.len()],
        }
    }

    fn scaled(&self, k: f64) -> Self {
        Dispatch {
            dg: self.dg.iter().map(|x| x * k).collect(),
            vb: self.vb.iter().map(|v| [v[0] * k, v[1] * k]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PfError {
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("voltage collapse: {0}")]
    Collapse(String),
    #[error("invalid case: {0}")]
    Case(String),
    #[error("dispatch has {got} entries, case has {expected}")]
    DispatchShape { got: usize, expected: usize },
}

/// Converged power-flow state, in the units of the input case. Branches are
/// oriented away from the slack (see [`Topology`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub unit: Unit,
    pub bases: Bases,
    /// `[U+, Uo, U-]` per node.
    pub voltage: Vec<PoleValues>,
    /// Current from the upstream to the downstream end, per branch and pole.
    pub branch_current: Vec<PoleValues>,
    /// Sending-end power `U_up * I`, per branch and pole.
    pub branch_power: Vec<PoleValues>,
    /// Resolved load power per node and port.
    pub port_load: Vec<PortValues>,
    /// Dispatch used, with the slack balancer's output filled in.
    pub dispatch: Dispatch,
    /// Power leaving the slack node on each conductor.
    pub slack_power: PoleValues,
    pub iterations: usize,
    /// Final current mismatch, pu.
    pub max_mismatch: f64,
}

impl PfSolution {
    pub fn port_voltages(&self, node: usize) -> PortValues {
        let [a, b, c] = self.voltage[node];
        port_voltages(a, b, c)
    }

    /// Voltage unbalance factor at `node`.
    pub fn vuf(&self, node: usize) -> f64 {
        let [up, un, _] = self.port_voltages(node);
        vuf_of(up, un)
    }

    pub fn max_vuf(&self) -> f64 {
        (0..self.voltage.len()).map(|i| self.vuf(i)).fold(0.0, f64::max)
    }

    /// Total ohmic loss over all branches and conductors.
    pub fn losses(&self, case: &NetworkCase) -> f64 {
        let topo = case.topology().expect("solution from a valid case");
        (0..topo.n_branches())
            .map(|k| {
                let r = case.branches[k].r;
                self.branch_current[k].iter().map(|i| i * i * r).sum::<f64>()
            })
            .sum()
    }

    /// Total power supplied by the slack node.
    pub fn slack_supply(&self) -> f64 {
        self.slack_power.iter().sum()
    }
}

/// `|U_p - U_n| / (0.5 (U_p + U_n))`
pub fn vuf_of(up: f64, un: f64) -> f64 {
    let den = 0.5 * (up + un);
    if den <= 0.0 {
        return f64::NAN;
    }
    (up - un).abs() / den
}

/// The current-balance equations of one snapshot, in per-unit.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    case: NetworkCase,
    topo: Topology,
    /// Node indices of the unknowns, in order.
    vars: Vec<usize>,
    /// Position of each node in `vars`.
    pos: Vec<Option<usize>>,
    /// Constant generation per node and port.
    gen: Vec<PortValues>,
}

impl NewtonSystem {
    /// Builds the system for `case` (any unit) with the given dispatch (same unit).
    pub fn new(case: &NetworkCase, dispatch: &Dispatch) -> Result<Self, PfError> {
        if dispatch.dg.len() != case.dgs.len() || dispatch.vb.len() != case.vbs.len() {
            return Err(PfError::DispatchShape {
                got: dispatch.dg.len() + dispatch.vb.len(),
                expected: case.dgs.len() + case.vbs.len(),
            });
        }
        let (pu, dispatch) = match case.unit {
            Unit::Pu => (case.clone(), dispatch.clone()),
            Unit::Si => (
                to_per_unit(case).map_err(|e| PfError::Case(e.to_string()))?,
                dispatch.scaled(1.0 / case.bases.power),
            ),
        };
        let topo = pu.topology().map_err(|e| PfError::Case(e.to_string()))?;
        let n = topo.n_nodes;
        let mut pos = vec![None; n];
        let vars: Vec<usize> = (0..n).filter(|&i| i != topo.slack).collect();
        for (k, &i) in vars.iter().enumerate() {
            pos[i] = Some(k);
        }
        let mut gen = vec![[0.0; 3]; n];
        for (g, &p) in pu.dgs.iter().zip(&dispatch.dg) {
            let i = pu.node_index(g.node).expect("validated");
            gen[i][g.port.index()] += p;
        }
        for (v, &[pp, pn]) in pu.vbs.iter().zip(&dispatch.vb) {
            if v.node == pu.slack.node {
                continue;
            }
            let i = pu.node_index(v.node).expect("validated");
            gen[i][Port::P.index()] += pp;
            gen[i][Port::N.index()] += pn;
        }
        Ok(NewtonSystem {
            case: pu,
            topo,
            vars,
            pos,
            gen,
        })
    }

    pub fn state_len(&self) -> usize {
        3 * self.vars.len()
    }

    pub fn flat_start(&self) -> DVector<f64> {
        let s = &self.case.slack;
        DVector::from_iterator(
            self.state_len(),
            self.vars.iter().flat_map(|_| [s.u_plus, s.u_neutral, s.u_minus]),
        )
    }

    fn node_voltages(&self, x: &DVector<f64>) -> Vec<PoleValues> {
        let s = &self.case.slack;
        (0..self.topo.n_nodes)
            .map(|i| match self.pos[i] {
                Some(k) => [x[3 * k], x[3 * k + 1], x[3 * k + 2]],
                None => [s.u_plus, s.u_neutral, s.u_minus],
            })
            .collect()
    }

    /// Net demand (load minus generation) per node and port, and its
    /// derivative with respect to the port voltage.
    fn demand(&self, u: &[PoleValues]) -> (Vec<PortValues>, Vec<PortValues>) {
        let n = self.topo.n_nodes;
        let mut d = self.gen.iter().map(|g| [-g[0], -g[1], -g[2]]).collect::<Vec<_>>();
        let mut dd = vec![[0.0; 3]; n];
        for l in &self.case.loads {
            let i = self.case.node_index(l.node).expect("validated");
            let uport = port_voltages(u[i][0], u[i][1], u[i][2])[l.port.index()];
            d[i][l.port.index()] += l.power_at(uport);
            dd[i][l.port.index()] += l.dpower_du(uport);
        }
        (d, dd)
    }

    /// Current drawn out of each conductor by the ports of each node.
    fn draws(u: &[PoleValues], d: &[PortValues]) -> Vec<PoleValues> {
        u.iter()
            .zip(d)
            .map(|(v, dem)| {
                let up = port_voltages(v[0], v[1], v[2]);
                let ip = dem[0] / up[0];
                let in_ = dem[1] / up[1];
                let ib = dem[2] / up[2];
                [ip + ib, in_ - ip, -in_ - ib]
            })
            .collect()
    }

    /// Current mismatch per unknown, pu.
    pub fn mismatch(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.node_voltages(x);
        let (d, _) = self.demand(&u);
        let draw = Self::draws(&u, &d);
        let mut f = DVector::zeros(self.state_len());
        for (&i, k) in self.vars.iter().zip(0..) {
            for c in 0..3 {
                f[3 * k + c] = draw[i][c];
            }
        }
        for b in 0..self.topo.n_branches() {
            let (i, j) = (self.topo.up[b], self.topo.down[b]);
            let g = 1.0 / self.case.branches[b].r;
            for c in 0..3 {
                let flow = g * (u[i][c] - u[j][c]);
                if let Some(k) = self.pos[i] {
                    f[3 * k + c] += flow;
                }
                if let Some(k) = self.pos[j] {
                    f[3 * k + c] -= flow;
                }
            }
        }
        f
    }

    /// Analytic Jacobian of [`Self::mismatch`].
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let u = self.node_voltages(x);
        let (d, dd) = self.demand(&u);
        let m = self.state_len();
        let mut jac = DMatrix::zeros(m, m);
        for b in 0..self.topo.n_branches() {
            let (i, j) = (self.topo.up[b], self.topo.down[b]);
            let g = 1.0 / self.case.branches[b].r;
            for c in 0..3 {
                if let Some(ki) = self.pos[i] {
                    jac[(3 * ki + c, 3 * ki + c)] += g;
                    if let Some(kj) = self.pos[j] {
                        jac[(3 * ki + c, 3 * kj + c)] -= g;
                    }
                }
                if let Some(kj) = self.pos[j] {
                    jac[(3 * kj + c, 3 * kj + c)] += g;
                    if let Some(ki) = self.pos[i] {
                        jac[(3 * kj + c, 3 * ki + c)] -= g;
                    }
                }
            }
        }
        // port current I = D(U)/U with U a difference of two pole voltages
        // (positive terminal a, negative terminal b); it leaves conductor a
        // and returns on conductor b.
        const TERMINALS: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];
        for (&i, k) in self.vars.iter().zip(0..) {
            let up = port_voltages(u[i][0], u[i][1], u[i][2]);
            for (p, &(a, b)) in TERMINALS.iter().enumerate() {
                let di = dd[i][p] / up[p] - d[i][p] / (up[p] * up[p]);
                // d(port voltage)/d(U_a) = 1, d/d(U_b) = -1
                for (row, sr) in [(a, 1.0), (b, -1.0)] {
                    for (col, sc) in [(a, 1.0), (b, -1.0)] {
                        jac[(3 * k + row, 3 * k + col)] += sr * sc * di;
                    }
                }
            }
        }
        jac
    }

    fn solve(&self) -> Result<(DVector<f64>, usize, f64), PfError> {
        let mut x = self.flat_start();
        if self.state_len() == 0 {
            return Ok((x, 0, 0.0));
        }
        let mut f = self.mismatch(&x);
        let mut norm = f.amax();
        for it in 0..=MAX_ITERATIONS {
            if norm <= MISMATCH_TOL {
                // one polishing step; quadratic convergence makes it nearly free
                if let Some(step) = self.jacobian(&x).lu().solve(&f) {
                    let trial = &x - step;
                    let nt = self.mismatch(&trial).amax();
                    if nt < norm {
                        return Ok((trial, it + 1, nt));
                    }
                }
                return Ok((x, it, norm));
            }
            if it == MAX_ITERATIONS {
                break;
            }
            let jac = self.jacobian(&x);
            let step = jac
                .lu()
                .solve(&f)
                .ok_or_else(|| PfError::Collapse(format!("singular Jacobian at iteration {it}")))?;
            let mut alpha = 1.0;
            loop {
                let trial = &x - alpha * &step;
                let ft = self.mismatch(&trial);
                let nt = ft.amax();
                if nt.is_finite() && (nt < norm || alpha < 1e-3) && self.ports_positive(&trial) {
                    x = trial;
                    f = ft;
                    norm = nt;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return Err(PfError::Collapse(format!(
                        "line search failed at iteration {it} (mismatch {norm:.3e} pu)"
                    )));
                }
            }
        }
        Err(PfError::NotConverged {
            iterations: MAX_ITERATIONS,
            mismatch: norm,
        })
    }

    fn ports_positive(&self, x: &DVector<f64>) -> bool {
        self.node_voltages(x)
            .iter()
            .all(|v| port_voltages(v[0], v[1], v[2]).iter().all(|&p| p > 0.0))
    }
}

/// Solves the power flow of `snapshot` with devices at `dispatch`
/// (all-zero dispatch if `None`).
pub fn solve_pf(snapshot: &NetworkCase, dispatch: Option<&Dispatch>) -> Result<PfSolution, PfError> {
    let zero = Dispatch::zero(snapshot);
    let dispatch = dispatch.unwrap_or(&zero);
    let sys = NewtonSystem::new(snapshot, dispatch)?;
    let (x, iterations, max_mismatch) = sys.solve()?;
    let pu = &sys.case;
    let topo = &sys.topo;
    let u = sys.node_voltages(&x);
    let mut branch_current = Vec::with_capacity(topo.n_branches());
    let mut branch_power = Vec::with_capacity(topo.n_branches());
    for b in 0..topo.n_branches() {
        let (i, j) = (topo.up[b], topo.down[b]);
        let r = pu.branches[b].r;
        let cur: PoleValues = std::array::from_fn(|c| (u[i][c] - u[j][c]) / r);
        branch_power.push(std::array::from_fn(|c| u[i][c] * cur[c]));
        branch_current.push(cur);
    }
    let mut port_load = vec![[0.0; 3]; topo.n_nodes];
    for l in &pu.loads {
        let i = pu.node_index(l.node).expect("validated");
        let v = u[i];
        port_load[i][l.port.index()] += l.power_at(port_voltages(v[0], v[1], v[2])[l.port.index()]);
    }
    let s = topo.slack;
    let mut slack_power = [0.0; 3];
    for &b in &topo.children[s] {
        for c in 0..3 {
            slack_power[c] += branch_power[b][c];
        }
    }
    let mut out = PfSolution {
        unit: Unit::Pu,
        bases: pu.bases.clone(),
        voltage: u,
        branch_current,
        branch_power,
        port_load,
        dispatch: Dispatch::default(),
        slack_power,
        iterations,
        max_mismatch,
    };
    let mut disp = dispatch.clone();
    if let Some(k) = snapshot.vb_at_slack() {
        // pole powers at the slack; the neutral carries no power at U_o = 0
        let scale = if snapshot.unit == Unit::Si { snapshot.bases.power } else { 1.0 };
        disp.vb[k] = [slack_power[0] * scale, slack_power[2] * scale];
    }
    if snapshot.unit == Unit::Si {
        out = solution_to_si(&out);
    }
    out.dispatch = disp;
    Ok(out)
}

fn solution_to_si(sol: &PfSolution) -> PfSolution {
    let b = &sol.bases;
    let (vb, ib, sb) = (b.voltage, b.current(), b.power);
    let scale3 = |v: &[f64; 3], k: f64| [v[0] * k, v[1] * k, v[2] * k];
    PfSolution {
        unit: Unit::Si,
        bases: sol.bases.clone(),
        voltage: sol.voltage.iter().map(|v| scale3(v, vb)).collect(),
        branch_current: sol.branch_current.iter().map(|v| scale3(v, ib)).collect(),
        branch_power: sol.branch_power.iter().map(|v| scale3(v, sb)).collect(),
        port_load: sol.port_load.iter().map(|v| scale3(v, sb)).collect(),
        dispatch: sol.dispatch.clone(),
        slack_power: scale3(&sol.slack_power, sb),
        iterations: sol.iterations,
        max_mismatch: sol.max_mismatch,
    }
}

/// Largest violation of each constraint family of the original problem, pu.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub ohm: f64,
    pub branch_power: f64,
    pub power_balance: f64,
    pub net_load_map: f64,
    pub zip: f64,
    pub port_transform: f64,
    pub voltage_band: f64,
    pub ampacity: f64,
    pub unbalance: f64,
    pub dg_bounds: f64,
    pub vb_bounds: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.named().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("ohm", self.ohm),
            ("branch_power", self.branch_power),
            ("power_balance", self.power_balance),
            ("net_load_map", self.net_load_map),
            ("zip", self.zip),
            ("port_transform", self.port_transform),
            ("voltage_band", self.voltage_band),
            ("ampacity", self.ampacity),
            ("unbalance", self.unbalance),
            ("dg_bounds", self.dg_bounds),
            ("vb_bounds", self.vb_bounds),
        ]
    }
}

fn outside(x: f64, [lo, hi]: [f64; 2]) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// Checks a candidate state against every constraint family of the original
/// nonconvex problem. The candidate's own port loads, currents and powers are
/// compared with what its voltages imply.
pub fn ori_residuals(snapshot: &NetworkCase, cand: &PfSolution) -> Residuals {
    let pu_case;
    let case = match snapshot.unit {
        Unit::Pu => snapshot,
        Unit::Si => {
            pu_case = to_per_unit(snapshot).expect("valid bases");
            &pu_case
        }
    };
    let cand_pu;
    let c = match cand.unit {
        Unit::Pu => cand,
        Unit::Si => {
            cand_pu = solution_to_pu(cand);
            &cand_pu
        }
    };
    let topo = case.topology().expect("valid case");
    let u = &c.voltage;
    let mut r = Residuals::default();

    for b in 0..topo.n_branches() {
        let (i, j) = (topo.up[b], topo.down[b]);
        let br = &case.branches[b];
        for p in Pole::ALL {
            let k = p.index();
            let cur = c.branch_current[b][k];
            r.ohm = r.ohm.max((u[i][k] - u[j][k] - br.r * cur).abs());
            r.branch_power = r.branch_power.max((c.branch_power[b][k] - u[i][k] * cur).abs());
            r.ampacity = r.ampacity.max(outside(cur, br.current_bounds.get(p)));
        }
    }

    // resolved net port demand per node
    let mut net = c.port_load.clone();
    let mut expected_load = vec![[0.0; 3]; topo.n_nodes];
    for l in &case.loads {
        let i = case.node_index(l.node).expect("validated");
        let v = u[i];
        expected_load[i][l.port.index()] += l.power_at(port_voltages(v[0], v[1], v[2])[l.port.index()]);
    }
    let sb = if cand.unit == Unit::Si { cand.bases.power } else { 1.0 };
    for (g, &p) in case.dgs.iter().zip(&c.dispatch.dg) {
        let i = case.node_index(g.node).expect("validated");
        let p = p / sb;
        net[i][g.port.index()] -= p;
        r.dg_bounds = r.dg_bounds.max(outside(p, [g.p_min, g.p_max]));
    }
    for (v, &[pp, pn]) in case.vbs.iter().zip(&c.dispatch.vb) {
        let (pp, pn) = (pp / sb, pn / sb);
        r.vb_bounds = r.vb_bounds.max(outside(pp, [0.0, v.capacity])).max(outside(pn, [0.0, v.capacity]));
        if v.node != case.slack.node {
            let i = case.node_index(v.node).expect("validated");
            net[i][Port::P.index()] -= pp;
            net[i][Port::N.index()] -= pn;
        }
    }

    for i in 0..topo.n_nodes {
        let v = u[i];
        let [up, un, ub] = port_voltages(v[0], v[1], v[2]);
        r.port_transform = r.port_transform.max(((v[0] - v[2]) - (up + un)).abs()).max((ub - (up + un)).abs());
        r.voltage_band = r
            .voltage_band
            .max(outside(v[0], case.limits.u_plus))
            .max(outside(v[2], case.limits.u_minus));
        if let Some(bn) = case.limits.u_neutral {
            r.voltage_band = r.voltage_band.max(outside(v[1], bn));
        }
        if i == topo.slack {
            continue;
        }
        r.unbalance = r.unbalance.max((vuf_of(up, un) - case.limits.unbalance).max(0.0));
        for p in 0..3 {
            r.zip = r.zip.max((c.port_load[i][p] - expected_load[i][p]).abs());
        }
        // conductor currents drawn by the node's ports
        let draw = NewtonSystem::draws(&[v], &[net[i]])[0];
        let mut inflow = [0.0; 3];
        let mut pin = [0.0; 3];
        if let Some(b) = topo.parent_branch[i] {
            for k in 0..3 {
                inflow[k] += c.branch_current[b][k];
                let cur = c.branch_current[b][k];
                pin[k] += c.branch_power[b][k] - cur * cur * case.branches[b].r;
            }
        }
        for &b in &topo.children[i] {
            for k in 0..3 {
                inflow[k] -= c.branch_current[b][k];
                pin[k] -= c.branch_power[b][k];
            }
        }
        for k in 0..3 {
            r.net_load_map = r.net_load_map.max((inflow[k] - draw[k]).abs());
            r.power_balance = r.power_balance.max((pin[k] - v[k] * draw[k]).abs());
        }
    }
    r
}

fn solution_to_pu(sol: &PfSolution) -> PfSolution {
    let b = &sol.bases;
    let (vb, ib, sb) = (b.voltage, b.current(), b.power);
    let scale3 = |v: &[f64; 3], k: f64| [v[0] / k, v[1] / k, v[2] / k];
    PfSolution {
        unit: Unit::Pu,
        bases: sol.bases.clone(),
        voltage: sol.voltage.iter().map(|v| scale3(v, vb)).collect(),
        branch_current: sol.branch_current.iter().map(|v| scale3(v, ib)).collect(),
        branch_power: sol.branch_power.iter().map(|v| scale3(v, sb)).collect(),
        port_load: sol.port_load.iter().map(|v| scale3(v, sb)).collect(),
        dispatch: sol.dispatch.clone(),
        slack_power: scale3(&sol.slack_power, sb),
        iterations: sol.iterations,
        max_mismatch: sol.max_mismatch,
    }
}

/// Converts a solution to the other unit system.
pub fn convert_solution(sol: &PfSolution, to: Unit) -> PfSolution {
    match (sol.unit, to) {
        (Unit::Si, Unit::Pu) => solution_to_pu(sol),
        (Unit::Pu, Unit::Si) => solution_to_si(sol),
        _ => sol.clone(),
    }
}

/// Total device output: slack supply plus DG and non-slack balancer injections.
pub fn total_generation(case: &NetworkCase, sol: &PfSolution) -> f64 {
    let dg: f64 = sol.dispatch.dg.iter().sum();
    let vb: f64 = case
        .vbs
        .iter()
        .zip(&sol.dispatch.vb)
        .filter(|(v, _)| v.node != case.slack.node)
        .map(|(_, p)| p[0] + p[1])
        .sum();
    sol.slack_supply() + dg + vb
}

/// Converts a per-unit case back to SI if needed; used by callers that hold
/// a per-unit snapshot but want engineering-unit output.
pub fn case_in_si(case: &NetworkCase) -> NetworkCase {
    match case.unit {
        Unit::Si => case.clone(),
        Unit::Pu => from_per_unit(case).expect("valid bases"),
    }
}
