//! Convex programs built from a network snapshot.
//!
//! Lifted variables: `V = U^2` per node and pole, `L = I^2` and `P = U I` per
//! branch and pole, `W ~ L V_send` per branch and pole, `v ~ V+ V-` per node.
//! Only the two poles enter; the neutral is recovered afterwards.
//!
//! [`build_mcsocp`] bounds `W` and `v` with McCormick envelopes and uses the
//! cones `P^2 <= W` and `V+^2 + V-^2 <= (a^2 - 2) v`; [`build_socp`] uses
//! `P^2 <= L V` and the unbalance cone on `V+`, `V-` directly.

mod builder;
mod dump;
mod varmap;

use serde::{Deserialize, Serialize};

use crate::netmodel::{to_per_unit, NetworkCase, Port, Unit, ZipLoad};

pub use builder::{build_mcsocp, build_socp, BuildError, BuiltProgram, RelaxationKind};
pub use dump::{dump_program, parse_dump};
pub use varmap::{VarMap, VarSymbol};

/// Convention for the constant-current term of an `n`-port load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZipSignConvention {
    /// `+i`, from expanding `U_n = -U- = sqrt(V-)`.
    #[default]
    Derived,
    /// `-i`, as sometimes printed.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildOptions {
    pub zip_sign: ZipSignConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Single-snapshot DG capacity configuration.
    DgSizing,
    /// Per-timestep operating cost.
    Operation,
}

/// Weighted objective `alpha * DG cost + beta * loss cost + gamma * VB cost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub mode: ObjectiveMode,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// DG price, $/kW
    pub c_g: f64,
    /// loss price, $/kWh
    pub c_loss: f64,
    /// VB cost `a P^2 + b P + c` with `P` in kW
    pub a_vb: f64,
    pub b_vb: f64,
    pub c_vb: f64,
}

impl ObjectiveSpec {
    pub fn dg_sizing() -> Self {
        ObjectiveSpec {
            mode: ObjectiveMode::DgSizing,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
            c_g: 603.19,
            c_loss: 0.5,
            a_vb: 8e-5,
            b_vb: 0.08,
            c_vb: 0.0,
        }
    }

    pub fn operation() -> Self {
        ObjectiveSpec {
            mode: ObjectiveMode::Operation,
            alpha: 0.8,
            beta: 0.1,
            gamma: 0.1,
            c_g: 0.8,
            ..ObjectiveSpec::dg_sizing()
        }
    }

    pub fn for_mode(mode: ObjectiveMode) -> Self {
        match mode {
            ObjectiveMode::DgSizing => Self::dg_sizing(),
            ObjectiveMode::Operation => Self::operation(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if [self.alpha, self.beta, self.gamma].iter().any(|w| !(*w >= 0.0)) {
            return Err("objective weights must be nonnegative".into());
        }
        if !(self.a_vb >= 0.0) {
            return Err("quadratic VB cost must be nonnegative".into());
        }
        Ok(())
    }

    /// Cost of one balancer port delivering `p_kw`.
    pub fn vb_cost(&self, p_kw: f64) -> f64 {
        self.a_vb * p_kw * p_kw + self.b_vb * p_kw + self.c_vb
    }
}

/// Box bounds on the squared quantities, per pole (`[+, -]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSet {
    /// `[lo, hi]` of `L` per pole and branch
    pub l: [Vec<[f64; 2]>; 2],
    /// `[lo, hi]` of `V` per pole and node
    pub v: [Vec<[f64; 2]>; 2],
    pub l_init: [Vec<[f64; 2]>; 2],
    pub v_init: [Vec<[f64; 2]>; 2],
}

impl BoundsSet {
    /// Sum of all interval widths.
    pub fn total_width(&self) -> f64 {
        self.l
            .iter()
            .chain(&self.v)
            .flatten()
            .map(|[lo, hi]| hi - lo)
            .sum()
    }

    /// First interval with `lo > hi`, as `(what, pole, index)`.
    pub fn first_inverted(&self) -> Option<(&'static str, usize, usize)> {
        for (name, set) in [("L", &self.l), ("V", &self.v)] {
            for (pole, list) in set.iter().enumerate() {
                if let Some(k) = list.iter().position(|[lo, hi]| lo > hi) {
                    return Some((name, pole, k));
                }
            }
        }
        None
    }

    /// Checks `0 <= lo <= hi` and containment in the initial boxes.
    pub fn is_consistent(&self) -> bool {
        let ok = |cur: &[Vec<[f64; 2]>; 2], ini: &[Vec<[f64; 2]>; 2]| {
            cur.iter().zip(ini).all(|(c, i)| {
                c.iter()
                    .zip(i)
                    .all(|(c, i)| 0.0 <= c[0] && c[0] <= c[1] && c[0] >= i[0] && c[1] <= i[1])
            })
        };
        ok(&self.l, &self.l_init) && ok(&self.v, &self.v_init)
    }
}

/// Initial boxes from the voltage band and ampacity of a snapshot.
pub fn initial_bounds(snapshot: &NetworkCase) -> BoundsSet {
    let pu;
    let case = if snapshot.unit == Unit::Pu {
        snapshot
    } else {
        pu = to_per_unit(snapshot).expect("valid bases");
        &pu
    };
    let topo = case.topology().expect("valid case");
    let sq = |[a, b]: [f64; 2]| {
        let (x, y) = (a * a, b * b);
        if a <= 0.0 && b >= 0.0 {
            [0.0, x.max(y)]
        } else {
            [x.min(y), x.max(y)]
        }
    };
    let band = [sq(case.limits.u_plus), sq(case.limits.u_minus)];
    let refs = [case.slack.u_plus.powi(2), case.slack.u_minus.powi(2)];
    let v: [Vec<[f64; 2]>; 2] = std::array::from_fn(|k| {
        (0..topo.n_nodes)
            .map(|i| if i == topo.slack { [refs[k], refs[k]] } else { band[k] })
            .collect()
    });
    let l: [Vec<[f64; 2]>; 2] = std::array::from_fn(|k| {
        case.branches
            .iter()
            .map(|br| {
                let [lo, hi] = if k == 0 { br.current_bounds.plus } else { br.current_bounds.minus };
                [0.0, (lo * lo).max(hi * hi)]
            })
            .collect()
    });
    BoundsSet {
        l_init: l.clone(),
        v_init: v.clone(),
        l,
        v,
    }
}

/// One affine inequality `cw w + cx x + cy y + c0 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub cw: f64,
    pub cx: f64,
    pub cy: f64,
    pub c0: f64,
}

impl EnvelopeRow {
    pub fn eval(&self, x: f64, y: f64, w: f64) -> f64 {
        self.cw * w + self.cx * x + self.cy * y + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("inverted bounds: [{lo}, {hi}]")]
pub struct InvertedBounds {
    pub lo: f64,
    pub hi: f64,
}

/// McCormick envelope of `w = x y` over `[x_lo, x_hi] x [y_lo, y_hi]`.
pub fn mccormick(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<[EnvelopeRow; 4], InvertedBounds> {
    if x_lo > x_hi {
        return Err(InvertedBounds { lo: x_lo, hi: x_hi });
    }
    if y_lo > y_hi {
        return Err(InvertedBounds { lo: y_lo, hi: y_hi });
    }
    Ok([
        // w >= x_lo y + x y_lo - x_lo y_lo
        EnvelopeRow { cw: 1.0, cx: -y_lo, cy: -x_lo, c0: x_lo * y_lo },
        // w >= x_hi y + x y_hi - x_hi y_hi
        EnvelopeRow { cw: 1.0, cx: -y_hi, cy: -x_hi, c0: x_hi * y_hi },
        // w <= x_lo y + x y_hi - x_lo y_hi
        EnvelopeRow { cw: -1.0, cx: y_hi, cy: x_lo, c0: -x_lo * y_hi },
        // w <= x_hi y + x y_lo - x_hi y_lo
        EnvelopeRow { cw: -1.0, cx: y_lo, cy: x_hi, c0: -x_hi * y_lo },
    ])
}

/// Constant of the relaxed unbalance cone for limit `delta`: returns
/// `(a, sqrt(a^2 - 2))` with `a = (2 + delta^2 / 2) / (1 - delta^2 / 4)`.
pub fn vuf_cone_constant(delta: f64) -> Result<(f64, f64), String> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(format!("unbalance limit {delta} outside (0, 1)"));
    }
    let a = (2.0 + 0.5 * delta * delta) / (1.0 - 0.25 * delta * delta);
    Ok((a, (a * a - 2.0).sqrt()))
}

/// Error of the first-order expansion `sqrt(z) ~ (z + 1) / 2`.
pub fn taylor_error(z: f64) -> f64 {
    (0.5 * z + 0.5 - z.sqrt()).abs()
}

/// Port load as an affine function `k0 + k_plus V+ + k_minus V- + k_v v`
/// of the lifted voltages (per-unit, expansion at 1.0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipRow {
    pub k0: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    pub k_v: f64,
}

impl ZipRow {
    pub fn eval(&self, v_plus: f64, v_minus: f64, v: f64) -> f64 {
        self.k0 + self.k_plus * v_plus + self.k_minus * v_minus + self.k_v * v
    }
}

/// Linearised ZIP row of one per-unit load.
pub fn linear_zip_row(load: &ZipLoad, sign: ZipSignConvention) -> ZipRow {
    let p0 = load.base_power;
    let ub = load.base_voltage;
    let zq = load.z / (ub * ub);
    let ih = load.i / (2.0 * ub);
    match load.port {
        Port::P => ZipRow {
            k0: p0 * (ih + load.p),
            k_plus: p0 * (zq + ih),
            k_minus: 0.0,
            k_v: 0.0,
        },
        Port::N => {
            let s = match sign {
                ZipSignConvention::Derived => 1.0,
                ZipSignConvention::Printed => -1.0,
            };
            ZipRow {
                k0: p0 * (s * ih + load.p),
                k_plus: 0.0,
                k_minus: p0 * (zq + s * ih),
                k_v: 0.0,
            }
        }
        Port::B => ZipRow {
            k0: p0 * (zq + 2.0 * ih + load.p),
            k_plus: p0 * (zq + ih),
            k_minus: p0 * (zq + ih),
            k_v: p0 * zq,
        },
    }
}

/// Pieces of the convex epigraph `t >= a P^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Epigraph {
    /// Second-order cone rows `(t + 1, 2 sqrt(a) P, t - 1)` as
    /// `(coef_t, coef_p, constant)` per component; empty when `a = 0`.
    pub cone: Vec<(f64, f64, f64)>,
    /// Objective: `coef_t * t + coef_p * P + constant`.
    pub objective: (f64, f64, f64),
}

/// Epigraph encoding of `a P^2 + b P + c`.
pub fn quad_cost_epigraph(a: f64, b: f64, c: f64) -> Result<Epigraph, String> {
    if !(a >= 0.0) {
        return Err(format!("quadratic coefficient {a} is negative"));
    }
    if a == 0.0 {
        return Ok(Epigraph {
            cone: Vec::new(),
            objective: (0.0, b, c),
        });
    }
    Ok(Epigraph {
        cone: vec![(1.0, 0.0, 1.0), (0.0, 2.0 * a.sqrt(), 0.0), (1.0, 0.0, -1.0)],
        objective: (1.0, b, c),
    })
}

/// Constraint family of a program row, for census and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RowFamily {
    SlackVoltage,
    VoltageDrop,
    PowerBalance,
    SlackBalance,
    NetLoad,
    Zip,
    DgBounds,
    VbBounds,
    SlackSupplyBounds,
    VoltageBox,
    CurrentBox,
    WBox,
    ProductBox,
    McCormickW,
    McCormickV,
    PowerCone,
    UnbalanceCone,
    Epigraph,
}

impl RowFamily {
    pub fn name(self) -> &'static str {
        match self {
            RowFamily::SlackVoltage => "slack voltage",
            RowFamily::VoltageDrop => "voltage drop",
            RowFamily::PowerBalance => "power balance",
            RowFamily::SlackBalance => "slack balance",
            RowFamily::NetLoad => "net-load map",
            RowFamily::Zip => "zip load",
            RowFamily::DgBounds => "dg capacity",
            RowFamily::VbBounds => "vb capacity",
            RowFamily::SlackSupplyBounds => "slack supply capacity",
            RowFamily::VoltageBox => "voltage bounds",
            RowFamily::CurrentBox => "current bounds",
            RowFamily::WBox => "W bounds",
            RowFamily::ProductBox => "v bounds",
            RowFamily::McCormickW => "McCormick W",
            RowFamily::McCormickV => "McCormick v",
            RowFamily::PowerCone => "power cone",
            RowFamily::UnbalanceCone => "unbalance cone",
            RowFamily::Epigraph => "cost epigraph",
        }
    }
}

/// Constraint counts by family.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census {
    pub power_cones: usize,
    pub unbalance_cones: usize,
    pub epigraph_cones: usize,
    /// Groups of four envelope rows.
    pub mccormick_w_sets: usize,
    pub mccormick_v_sets: usize,
    pub zero_rows: usize,
    pub nonneg_rows: usize,
    pub soc_rows: usize,
    pub n_vars: usize,
    pub n_w_vars: usize,
}
