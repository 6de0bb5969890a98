#![allow(dead_code)]

use bdcdn::netmodel::*;

/// Two nodes at ±400 V joined by one 0.1 Ω branch, with the given
/// constant-power port loads at node 1.
pub fn two_node(p: f64, n: f64, b: f64) -> NetworkCase {
    let mut case = random_radial(
        &RandomCaseSpec {
            min_nodes: 2,
            max_nodes: 2,
            dg_probability: 0.0,
            ..RandomCaseSpec::default()
        },
        0,
    );
    case.name = "two-node".into();
    case.branches[0].r = 0.1;
    for (l, v) in case.loads.iter_mut().zip([p, n, b]) {
        l.base_power = v;
    }
    case
}

pub fn feeder5_extreme() -> NetworkCase {
    let case = builtin("feeder5").unwrap();
    let profile = case.profile.clone().unwrap();
    at_time(&case, &profile, profile.extreme.unwrap()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random radial case with the `n` port load copied from the `p` port, so
/// both poles carry the same current and the neutral stays at 0 V.
pub fn balanced_radial(seed: u64) -> NetworkCase {
    let mut case = random_radial(
        &RandomCaseSpec {
            load_range: [100.0, 800.0],
            ..RandomCaseSpec::default()
        },
        seed,
    );
    let p: Vec<(usize, f64)> = case.loads.iter().filter(|l| l.port == Port::P).map(|l| (l.node, l.base_power)).collect();
    for l in case.loads.iter_mut().filter(|l| l.port == Port::N) {
        l.base_power = p.iter().find(|(n, _)| *n == l.node).unwrap().1;
    }
    case
}
