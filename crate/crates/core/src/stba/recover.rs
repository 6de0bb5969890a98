use serde::{Deserialize, Serialize};

use super::{OpfSolution, CERT_TOL};
use crate::netmodel::{port_voltages, NetworkCase, Port, Unit};
use crate::pf_oracle::{convert_solution, ori_residuals, Dispatch, PfSolution, Residuals};
use crate::relaxbuild::{taylor_error, BuiltProgram};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecoverError {
    #[error("negative squared voltage {value:e} on pole {pole} at node {node}")]
    NegativeV { pole: usize, node: usize, value: f64 },
    #[error("neutral completion failed: {0}")]
    Neutral(String),
}

/// Physical state rebuilt from a relaxed point, pu. Conductor order is
/// `[+, o, -]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredState {
    pub voltage: Vec<[f64; 3]>,
    pub branch_current: Vec<[f64; 3]>,
    /// Largest `|U_i - U_j - r I|` on the two poles.
    pub ohm_mismatch: f64,
    /// Largest difference between recovered pole voltages and a power flow
    /// at the same dispatch, when one is supplied.
    pub model_gap: Option<f64>,
    /// Fixed-point sweeps used to complete the neutral.
    pub neutral_sweeps: usize,
}

const SIGN_TOL: f64 = 1e-12;
const NEUTRAL_TOL: f64 = 1e-14;
const NEUTRAL_SWEEPS: usize = 200;

/// Port demand per node, `[p, n, b]` pu, net of DG and non-slack balancers.
fn port_demand(built: &BuiltProgram, d: &Dispatch, u: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let case = &built.case;
    let mut net = vec![[0.0; 3]; built.topology.n_nodes];
    for l in &case.loads {
        let i = case.node_index(l.node).expect("validated");
        let v = u[i];
        net[i][l.port.index()] += l.power_at(port_voltages(v[0], v[1], v[2])[l.port.index()]);
    }
    for (g, &p) in case.dgs.iter().zip(&d.dg) {
        net[case.node_index(g.node).expect("validated")][g.port.index()] -= p;
    }
    for (v, &[pp, pn]) in case.vbs.iter().zip(&d.vb) {
        if v.node != case.slack.node {
            let i = case.node_index(v.node).expect("validated");
            net[i][Port::P.index()] -= pp;
            net[i][Port::N.index()] -= pn;
        }
    }
    net
}

/// Pole voltages from square roots with the slack sign convention and pole
/// currents `I = P / U`, which equals `+-sqrt(L)` on an exact point and
/// carries the flow direction, reversed flow included. The relaxation has
/// no neutral, so it is completed from the recovered poles: neutral KCL
/// from the leaves up and Ohm's law from the grounded slack down, repeated
/// until the neutral voltages settle.
pub fn recover(
    built: &BuiltProgram,
    x: &[f64],
    oracle: Option<&PfSolution>,
) -> Result<RecoveredState, RecoverError> {
    let vm = &built.varmap;
    let topo = &built.topology;
    let mut voltage = vec![[0.0; 3]; topo.n_nodes];
    for (i, u) in voltage.iter_mut().enumerate() {
        for (pole, slot, sign) in [(0, 0, 1.0), (1, 2, -1.0)] {
            let v = x[vm.v[pole][i]];
            if v < -1e-12 {
                return Err(RecoverError::NegativeV { pole, node: i, value: v });
            }
            u[slot] = sign * v.max(0.0).sqrt();
        }
    }
    let mut current = vec![[0.0; 3]; topo.n_branches()];
    let mut ohm = 0.0f64;
    for (b, cur) in current.iter_mut().enumerate() {
        let (i, j) = (topo.up[b], topo.down[b]);
        let r = built.case.branches[b].r;
        for (pole, slot) in [(0, 0), (1, 2)] {
            let u = voltage[i][slot];
            cur[slot] = if u.abs() > SIGN_TOL {
                // second factor of the rank-one split [V P; P L] = a a'
                x[vm.p[pole][b]] / u
            } else {
                let mag = x[vm.l[pole][b]].max(0.0).sqrt();
                (voltage[i][slot] - voltage[j][slot]).signum() * mag
            };
            ohm = ohm.max((voltage[i][slot] - voltage[j][slot] - r * cur[slot]).abs());
        }
    }

    let dispatch = built.dispatch(x, Unit::Pu);
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let demand = port_demand(built, &dispatch, &voltage);
        let draw: Vec<f64> = voltage
            .iter()
            .zip(&demand)
            .map(|(v, d)| {
                let up = port_voltages(v[0], v[1], v[2]);
                d[1] / up[1] - d[0] / up[0]
            })
            .collect();
        for &j in topo.order.iter().rev() {
            if let Some(b) = topo.parent_branch[j] {
                current[b][1] = draw[j] + topo.children[j].iter().map(|&c| current[c][1]).sum::<f64>();
            }
        }
        let mut change = 0.0f64;
        for &j in &topo.order {
            if let Some(b) = topo.parent_branch[j] {
                let u = voltage[topo.up[b]][1] - built.case.branches[b].r * current[b][1];
                change = change.max((u - voltage[j][1]).abs());
                voltage[j][1] = u;
            }
        }
        if !change.is_finite() {
            return Err(RecoverError::Neutral("neutral sweep diverged".into()));
        }
        if change <= NEUTRAL_TOL {
            break;
        }
        if sweeps == NEUTRAL_SWEEPS {
            return Err(RecoverError::Neutral(format!("no fixed point after {sweeps} sweeps (change {change:e})")));
        }
    }

    let model_gap = oracle.map(|o| {
        let o = convert_solution(o, Unit::Pu);
        voltage
            .iter()
            .zip(&o.voltage)
            .flat_map(|(a, o)| [(a[0] - o[0]).abs(), (a[2] - o[2]).abs()])
            .fold(0.0, f64::max)
    });
    Ok(RecoveredState {
        voltage,
        branch_current: current,
        ohm_mismatch: ohm,
        model_gap,
        neutral_sweeps: sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExactnessMetrics {
    /// `max |P^2 - W| / max(W, floor)`, with `W = L V` when not lifted.
    pub soc_gap: f64,
    pub mccormick_w_gap: f64,
    pub mccormick_v_gap: f64,
    /// `max |P^2 - V L| / max(V L, floor)` per branch and pole.
    pub rank1_gap: f64,
    /// Largest first-order expansion error over load terms that use it.
    pub taylor_mu: f64,
}

/// Gap metrics of a relaxed point; denominators are floored at `floor`.
pub fn exactness(built: &BuiltProgram, x: &[f64], floor: f64) -> ExactnessMetrics {
    let vm = &built.varmap;
    let topo = &built.topology;
    let mut m = ExactnessMetrics::default();
    for pole in 0..2 {
        for b in 0..topo.n_branches() {
            let (p, l, v) = (x[vm.p[pole][b]], x[vm.l[pole][b]], x[vm.v[pole][topo.up[b]]]);
            let w = vm.w.as_ref().map_or(l * v, |w| x[w[pole][b]]);
            m.soc_gap = m.soc_gap.max((p * p - w).abs() / w.max(floor));
            m.rank1_gap = m.rank1_gap.max((p * p - v * l).abs() / (v * l).max(floor));
            if vm.w.is_some() {
                m.mccormick_w_gap = m.mccormick_w_gap.max((w - l * v).abs() / w.max(floor));
            }
        }
    }
    for i in 0..topo.n_nodes {
        if let Some(k) = vm.product[i] {
            let prod = x[vm.v[0][i]] * x[vm.v[1][i]];
            m.mccormick_v_gap = m.mccormick_v_gap.max((x[k] - prod).abs() / x[k].max(floor));
        }
    }
    for load in &built.case.loads {
        let i = built.case.node_index(load.node).expect("validated");
        let (vp, vn) = (x[vm.v[0][i]], x[vm.v[1][i]]);
        let mu = match load.port {
            Port::P if load.i != 0.0 => taylor_error(vp),
            Port::N if load.i != 0.0 => taylor_error(vn),
            Port::B => {
                let mut mu = 0.0f64;
                if load.z != 0.0 {
                    mu = mu.max(taylor_error(x[vm.product[i].expect("non-slack")]));
                }
                if load.i != 0.0 {
                    mu = mu.max(taylor_error(vp)).max(taylor_error(vn));
                }
                mu
            }
            _ => 0.0,
        };
        m.taylor_mu = m.taylor_mu.max(mu);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Residuals of the recovered state against the original constraints.
    pub residuals: Residuals,
    pub max_residual: f64,
    pub rank1_gap: f64,
    /// Residuals of the power flow at the optimised dispatch.
    pub oracle_residuals: Option<Residuals>,
    pub certified: bool,
}

/// The recovered state as a power-flow candidate, pu.
pub fn candidate(built: &BuiltProgram, x: &[f64], rec: &RecoveredState) -> PfSolution {
    let topo = &built.topology;
    let case = &built.case;
    let branch_power = (0..topo.n_branches())
        .map(|b| {
            let u = rec.voltage[topo.up[b]];
            let c = rec.branch_current[b];
            [u[0] * c[0], u[1] * c[1], u[2] * c[2]]
        })
        .collect::<Vec<_>>();
    let mut port_load = vec![[0.0; 3]; topo.n_nodes];
    for l in &case.loads {
        let i = case.node_index(l.node).expect("validated");
        let u = rec.voltage[i];
        port_load[i][l.port.index()] += l.power_at(port_voltages(u[0], u[1], u[2])[l.port.index()]);
    }
    let mut slack_power = [0.0; 3];
    for &b in &topo.children[topo.slack] {
        for k in 0..3 {
            slack_power[k] += branch_power[b][k];
        }
    }
    PfSolution {
        unit: Unit::Pu,
        bases: case.bases.clone(),
        voltage: rec.voltage.clone(),
        branch_current: rec.branch_current.clone(),
        branch_power,
        port_load,
        dispatch: built.dispatch(x, Unit::Pu),
        slack_power,
        iterations: 0,
        max_mismatch: 0.0,
    }
}

/// Checks a converged point: rank-1 identity per branch and the recovered
/// state against every original constraint family, both within [`CERT_TOL`].
pub fn certify(sol: &OpfSolution, built: &BuiltProgram, rec: &RecoveredState) -> Certificate {
    let cand = candidate(built, &sol.x, rec);
    let residuals = ori_residuals(&built.case, &cand);
    let oracle_residuals = sol.oracle.as_ref().map(|o| ori_residuals(&built.case, o));
    let rank1_gap = sol.exactness.rank1_gap;
    let max_residual = residuals.max();
    Certificate {
        certified: rank1_gap <= CERT_TOL && max_residual <= CERT_TOL,
        residuals,
        max_residual,
        rank1_gap,
        oracle_residuals,
    }
}

/// Objective of a power-flow state: DG cost, loss on all three conductors
/// and balancer cost, with the slack balancer priced at its solved output.
pub fn ori_objective(snapshot: &NetworkCase, pf: &PfSolution, obj: &crate::relaxbuild::ObjectiveSpec) -> f64 {
    let kw = match pf.unit {
        Unit::Si => 1e-3,
        Unit::Pu => pf.bases.power / 1000.0,
    };
    let dg: f64 = pf.dispatch.dg.iter().sum::<f64>() * kw;
    let loss = pf.losses(snapshot_in(snapshot, pf.unit).as_ref().unwrap_or(snapshot)) * kw;
    let vb: f64 = pf
        .dispatch
        .vb
        .iter()
        .flat_map(|p| [p[0] * kw, p[1] * kw])
        .map(|p| obj.vb_cost(p))
        .sum();
    obj.alpha * obj.c_g * dg + obj.beta * obj.c_loss * loss + obj.gamma * vb
}

fn snapshot_in(case: &NetworkCase, unit: Unit) -> Option<NetworkCase> {
    if case.unit == unit {
        return None;
    }
    match unit {
        Unit::Pu => crate::netmodel::to_per_unit(case).ok(),
        Unit::Si => crate::netmodel::from_per_unit(case).ok(),
    }
}
