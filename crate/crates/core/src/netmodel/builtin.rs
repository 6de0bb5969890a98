//! Bundled test systems and a random radial case generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::case::{
    parse_case, Bases, Branch, CaseError, DgSpec, Limits, NetworkCase, PoleBounds, Slack, Unit,
    VbSpec, ZipLoad, CASE_FORMAT,
};
use super::profile::parse_profile_csv;
use super::Port;

const FEEDER5: &str = include_str!("../../data/feeder5.json");
const IEEE33_BRANCHES: &str = include_str!("../../data/ieee33_branches.csv");
const IEEE33_PROFILE: &str = include_str!("../../data/ieee33_profile.csv");

/// Fraction of the IEEE-33 nominal loading carried by the bipolar variant.
pub const IEEE33_LOAD_SCALE: f64 = 0.3;
/// Share of each node's load connected pole-to-pole.
pub const IEEE33_B_SHARE: f64 = 0.3;

pub fn builtin_names() -> &'static [&'static str] {
    &["feeder5", "ieee33_bipolar"]
}

pub fn builtin(name: &str) -> Result<NetworkCase, CaseError> {
    match name {
        "feeder5" => parse_case(FEEDER5),
        "ieee33_bipolar" => Ok(ieee33_bipolar(IEEE33_LOAD_SCALE, IEEE33_B_SHARE)),
        other => Err(CaseError::Semantic(vec![super::Diagnostic {
            code: "unknown case",
            location: "builtin".into(),
            message: format!("unknown builtin case \"{other}\" (known: {})", builtin_names().join(", ")),
        }])),
    }
}

#[derive(Debug, serde::Deserialize)]
struct Ieee33Row {
    from: usize,
    to: usize,
    r_ohm: f64,
    load_kw: f64,
}

/// IEEE 33-bus feeder converted to a ±3 kV bipolar system.
///
/// Bus `k` of the original system becomes node `k - 1`. Each node's load is
/// `load_scale` times the original active load, with `b_share` on the `b`
/// port and the rest split so the `p` port carries 20% more than `n`.
pub fn ieee33_bipolar(load_scale: f64, b_share: f64) -> NetworkCase {
    let mut rdr = csv::Reader::from_reader(IEEE33_BRANCHES.as_bytes());
    let rows: Vec<Ieee33Row> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled branch table parses");
    let u = 3000.0;
    let bounds = PoleBounds {
        plus: [-300.0, 300.0],
        neutral: [-150.0, 150.0],
        minus: [-300.0, 300.0],
    };
    let branches = rows
        .iter()
        .map(|r| Branch {
            from: r.from - 1,
            to: r.to - 1,
            r: r.r_ohm,
            current_bounds: bounds,
        })
        .collect();
    let mut loads = Vec::new();
    for r in &rows {
        let total = r.load_kw * 1e3 * load_scale;
        let single = total * (1.0 - b_share);
        let n = single / 2.2;
        for (port, power, base) in [
            (Port::P, 1.2 * n, u),
            (Port::N, n, u),
            (Port::B, total * b_share, 2.0 * u),
        ] {
            loads.push(ZipLoad::constant_power(r.to - 1, port, power, base));
        }
    }
    let dgs = [Port::P, Port::N]
        .into_iter()
        .map(|port| DgSpec {
            node: 21,
            port,
            p_min: 0.0,
            p_max: 500e3,
            unit_cost: 0.8,
        })
        .collect();
    let vbs = [0, 13, 30]
        .into_iter()
        .map(|node| VbSpec {
            node,
            capacity: 500e3,
            a: 8e-5,
            b: 0.08,
            c: 0.0,
            u_ps: u,
            u_ns: u,
        })
        .collect();
    let mut profile = parse_profile_csv(IEEE33_PROFILE).expect("bundled profile parses");
    profile.extreme = Some(19);
    NetworkCase {
        format: CASE_FORMAT.into(),
        name: "ieee33_bipolar".into(),
        unit: Unit::Si,
        nodes: (0..33).collect(),
        slack: Slack {
            node: 0,
            u_plus: u,
            u_neutral: 0.0,
            u_minus: -u,
        },
        branches,
        loads,
        dgs,
        vbs,
        limits: Limits {
            u_plus: [0.95 * u, 1.05 * u],
            u_minus: [-1.05 * u, -0.95 * u],
            u_neutral: None,
            unbalance: 0.03,
        },
        bases: Bases {
            voltage: u,
            power: 1e6,
        },
        profile: Some(profile),
        notes: vec![
            format!("loads are {load_scale} x the IEEE-33 active loads; b-port share {b_share}; p = 1.2 n"),
            "ampacity widened from [-10, 10] (poles) and [-1, 1] (neutral)".into(),
            "profile shape is synthetic".into(),
        ],
    }
}

/// Parameters for [`random_radial`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCaseSpec {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Per-port constant-power load range, watts.
    pub load_range: [f64; 2],
    /// Resistance range, ohms.
    pub r_range: [f64; 2],
    /// Probability that a non-slack node hosts DGs on `p` and `n`.
    pub dg_probability: f64,
}

impl Default for RandomCaseSpec {
    fn default() -> Self {
        RandomCaseSpec {
            min_nodes: 3,
            max_nodes: 8,
            load_range: [100.0, 1500.0],
            r_range: [0.05, 0.2],
            dg_probability: 0.5,
        }
    }
}

/// Random radial ±400 V case with constant-power loads, deterministic in `seed`.
pub fn random_radial(spec: &RandomCaseSpec, seed: u64) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(spec.min_nodes.max(2)..=spec.max_nodes.max(2));
    let bounds = PoleBounds {
        plus: [-150.0, 150.0],
        neutral: [-75.0, 75.0],
        minus: [-150.0, 150.0],
    };
    let branches = (1..n)
        .map(|j| Branch {
            from: rng.random_range(0..j),
            to: j,
            r: rng.random_range(spec.r_range[0]..=spec.r_range[1]),
            current_bounds: bounds,
        })
        .collect();
    let mut loads = Vec::new();
    let mut dgs = Vec::new();
    for j in 1..n {
        for (port, base) in [(Port::P, 400.0), (Port::N, 400.0), (Port::B, 800.0)] {
            let p = rng.random_range(spec.load_range[0]..=spec.load_range[1]);
            loads.push(ZipLoad::constant_power(j, port, p, base));
        }
        if rng.random_bool(spec.dg_probability) {
            for port in [Port::P, Port::N] {
                dgs.push(DgSpec {
                    node: j,
                    port,
                    p_min: 0.0,
                    p_max: 5000.0,
                    unit_cost: 603.19,
                });
            }
        }
    }
    NetworkCase {
        format: CASE_FORMAT.into(),
        name: format!("random-{seed}"),
        unit: Unit::Si,
        nodes: (0..n).collect(),
        slack: Slack {
            node: 0,
            u_plus: 400.0,
            u_neutral: 0.0,
            u_minus: -400.0,
        },
        branches,
        loads,
        dgs,
        vbs: vec![VbSpec {
            node: 0,
            capacity: 1e5,
            a: 8e-5,
            b: 0.08,
            c: 0.0,
            u_ps: 400.0,
            u_ns: 400.0,
        }],
        limits: Limits {
            u_plus: [380.0, 420.0],
            u_minus: [-420.0, -380.0],
            u_neutral: None,
            unbalance: 0.03,
        },
        bases: Bases {
            voltage: 400.0,
            power: 10_000.0,
        },
        profile: None,
        notes: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feeder5_load_table() {
        let case = builtin("feeder5").unwrap();
        let table = |port: Port| -> Vec<f64> {
            (1..=4)
                .map(|n| {
                    case.loads
                        .iter()
                        .find(|l| l.node == n && l.port == port)
                        .unwrap()
                        .base_power
                })
                .collect()
        };
        assert_eq!(table(Port::P), vec![500.0, 1000.0, 800.0, 900.0]);
        assert_eq!(table(Port::N), vec![1000.0, 600.0, 700.0, 400.0]);
        assert_eq!(table(Port::B), vec![1200.0, 1500.0, 1200.0, 1000.0]);
        assert!(case.loads.iter().all(|l| l.is_constant_power()));
        assert_eq!(case.limits.unbalance, 0.03);
        assert_eq!(case.limits.u_plus, [380.0, 420.0]);
        assert_eq!(case.vbs.len(), 1);
        assert_eq!(case.vbs[0].node, 0);
        assert_eq!(case.vbs[0].capacity, 1000.0);
    }

    #[test]
    fn ieee33_devices() {
        let case = builtin("ieee33_bipolar").unwrap();
        let vb: Vec<usize> = case.vbs.iter().map(|v| v.node).collect();
        assert_eq!(vb, vec![0, 13, 30]);
        assert!(case.dgs.iter().all(|d| d.node == 21 && d.p_max == 500e3));
        assert_eq!(case.profile.as_ref().unwrap().len(), 24);
        assert_eq!(case.branches.len(), 32);
    }

    #[test]
    fn ieee33_split_ratio() {
        let case = ieee33_bipolar(1.0, 0.3);
        let at = |port: Port| case.loads.iter().find(|l| l.node == 1 && l.port == port).unwrap().base_power;
        assert!((at(Port::P) / at(Port::N) - 1.2).abs() < 1e-12);
        assert!((at(Port::P) + at(Port::N) + at(Port::B) - 100e3).abs() < 1e-6);
        let total: f64 = case.loads.iter().map(|l| l.base_power).sum();
        assert!((total - 3715e3).abs() < 1e-3);
    }

    #[test]
    fn unknown_builtin() {
        assert!(builtin("ieee14").is_err());
    }

    #[test]
    fn random_cases_are_valid_and_deterministic() {
        let spec = RandomCaseSpec::default();
        for seed in 0..20 {
            let a = random_radial(&spec, seed);
            assert!(a.nodes.len() <= 8);
            assert_eq!(crate::netmodel::validate(&a), vec![]);
            assert_eq!(a, random_radial(&spec, seed));
        }
    }
}
