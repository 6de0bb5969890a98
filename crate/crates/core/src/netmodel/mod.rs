//! Bipolar network data model.
//!
//! A bipolar feeder has three conductors (positive, neutral, negative). Loads
//! and generators attach to ports: `p` between positive and neutral, `n`
//! between neutral and negative, `b` between the two poles.

mod builtin;
mod case;
mod profile;
mod topology;
mod units;

pub use builtin::{builtin, builtin_names, random_radial, RandomCaseSpec};
pub use case::{
    parse_case, serialize_case, validate, Bases, Branch, CaseError, DgSpec, Diagnostic, Limits,
    NetworkCase, PoleBounds, Slack, Unit, VbSpec, ZipLoad, CASE_FORMAT,
};
pub use profile::{at_time, parse_profile_csv, write_profile_csv, LoadProfile, ProfileError};
pub use topology::{Topology, TopologyError};
pub use units::{from_per_unit, to_per_unit, UnitError};

use serde::{Deserialize, Serialize};

/// Conductor of a bipolar network. Ordered `Positive < Neutral < Negative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    Positive,
    Neutral,
    Negative,
}

impl Pole {
    pub const ALL: [Pole; 3] = [Pole::Positive, Pole::Neutral, Pole::Negative];
    /// The two poles carried by the convex model; the neutral is recovered afterwards.
    pub const ACTIVE: [Pole; 2] = [Pole::Positive, Pole::Negative];

    pub fn index(self) -> usize {
        match self {
            Pole::Positive => 0,
            Pole::Neutral => 1,
            Pole::Negative => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Pole::Positive => "+",
            Pole::Neutral => "o",
            Pole::Negative => "-",
        }
    }
}

/// Two-terminal connection point of a load or source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    /// positive to neutral
    P,
    /// neutral to negative
    N,
    /// positive to negative
    B,
}

impl Port {
    pub const ALL: [Port; 3] = [Port::P, Port::N, Port::B];

    pub fn index(self) -> usize {
        match self {
            Port::P => 0,
            Port::N => 1,
            Port::B => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Port::P => "p",
            Port::N => "n",
            Port::B => "b",
        }
    }
}

/// One value per port, indexed `[p, n, b]`.
pub type PortValues = [f64; 3];
/// One value per pole, indexed `[+, o, -]`.
pub type PoleValues = [f64; 3];

/// Port voltages from pole voltages.
///
/// `U_b = U_p + U_n` holds exactly for the returned triple.
pub fn port_voltages(u_plus: f64, u_neutral: f64, u_minus: f64) -> PortValues {
    let up = u_plus - u_neutral;
    let un = u_neutral - u_minus;
    [up, un, up + un]
}

/// Signed pole injections from resolved port loads and port generation.
///
/// Rows follow the pole-injection convention where the negative-pole row is
/// reported with generation minus load:
///
/// ```text
/// P+ = (PL_p + PL_b) - (PG_p + PG_b)
/// Po = (PL_n - PL_p) - (PG_n - PG_p)
/// P- = (PG_n + PG_b) - (PL_n + PL_b)
/// ```
///
/// The optimisation model does not use this map directly; see
/// [`pole_power_split`] for the conductor-level split it relies on.
pub fn pole_injections(load: PortValues, gen: PortValues) -> PoleValues {
    let [lp, ln, lb] = load;
    let [gp, gn, gb] = gen;
    [
        (lp + lb) - (gp + gb),
        (ln - lp) - (gn - gp),
        (gn + gb) - (ln + lb),
    ]
}

/// Power drawn from each pole conductor by a node's net port demand, given
/// the node's pole voltages.
///
/// A `b` port draws its current from the positive conductor and returns it on
/// the negative one, so its power splits between the poles in proportion to
/// `U+` and `-U-`. The neutral term is `U_o` times the net neutral current;
/// the three entries sum to the total port demand.
pub fn pole_power_split(net_port: PortValues, u: PoleValues) -> PoleValues {
    let [up, un, ub] = port_voltages(u[0], u[1], u[2]);
    let ip = net_port[0] / up;
    let in_ = net_port[1] / un;
    let ib = net_port[2] / ub;
    [u[0] * (ip + ib), u[1] * (in_ - ip), -u[2] * (in_ + ib)]
}
