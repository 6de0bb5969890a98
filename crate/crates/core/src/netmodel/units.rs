//! Per-unit scaling.
//!
//! Voltage base is the pole-to-neutral nominal voltage and power base the
//! rated power; impedance and current bases follow. Dimensionless fields
//! (ZIP shares, unbalance limit, profile multipliers) and prices are left
//! untouched.

use super::case::{NetworkCase, Unit};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("bases must be positive, got voltage {voltage} and power {power}")]
    BadBase { voltage: f64, power: f64 },
    #[error("case is already in {0:?} units")]
    AlreadyConverted(Unit),
}

fn scale(case: &NetworkCase, to: Unit) -> Result<NetworkCase, UnitError> {
    let b = &case.bases;
    if !(b.voltage > 0.0 && b.power > 0.0) {
        return Err(UnitError::BadBase {
            voltage: b.voltage,
            power: b.power,
        });
    }
    if case.unit == to {
        return Err(UnitError::AlreadyConverted(to));
    }
    let (vb, sb, zb, ib) = (b.voltage, b.power, b.impedance(), b.current());
    // multiply to go pu -> si, divide to go si -> pu
    let k = |base: f64| -> Box<dyn Fn(f64) -> f64> {
        match to {
            Unit::Pu => Box::new(move |x| x / base),
            Unit::Si => Box::new(move |x| x * base),
        }
    };
    let (kv, ks, kz, ki) = (k(vb), k(sb), k(zb), k(ib));

    let mut out = case.clone();
    out.unit = to;
    out.slack.u_plus = kv(case.slack.u_plus);
    out.slack.u_neutral = kv(case.slack.u_neutral);
    out.slack.u_minus = kv(case.slack.u_minus);
    for br in &mut out.branches {
        br.r = kz(br.r);
        br.current_bounds = br.current_bounds.map(&ki);
    }
    for l in &mut out.loads {
        l.base_power = ks(l.base_power);
        l.base_voltage = kv(l.base_voltage);
    }
    for g in &mut out.dgs {
        g.p_min = ks(g.p_min);
        g.p_max = ks(g.p_max);
    }
    for v in &mut out.vbs {
        v.capacity = ks(v.capacity);
        v.u_ps = kv(v.u_ps);
        v.u_ns = kv(v.u_ns);
    }
    let lim = &mut out.limits;
    lim.u_plus = lim.u_plus.map(&kv);
    lim.u_minus = lim.u_minus.map(&kv);
    lim.u_neutral = lim.u_neutral.map(|b| b.map(&kv));
    Ok(out)
}

pub fn to_per_unit(case: &NetworkCase) -> Result<NetworkCase, UnitError> {
    scale(case, Unit::Pu)
}

pub fn from_per_unit(case: &NetworkCase) -> Result<NetworkCase, UnitError> {
    scale(case, Unit::Si)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::builtin;

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn feeder_reference_is_one() {
        let pu = to_per_unit(&builtin("feeder5").unwrap()).unwrap();
        assert_eq!(pu.slack.u_plus, 1.0);
        assert_eq!(pu.slack.u_minus, -1.0);
        assert!((pu.branches[0].r - 0.1 / (400.0 * 400.0 / 10_000.0)).abs() < 1e-15);
        assert!((pu.branches[0].r - 0.00625).abs() < 1e-15);
    }

    #[test]
    fn round_trip_ieee33() {
        let case = builtin("ieee33_bipolar").unwrap();
        let back = from_per_unit(&to_per_unit(&case).unwrap()).unwrap();
        assert!(rel_close(back.slack.u_plus, case.slack.u_plus));
        for (a, b) in back.branches.iter().zip(&case.branches) {
            assert!(rel_close(a.r, b.r));
            assert!(rel_close(a.current_bounds.plus[1], b.current_bounds.plus[1]));
        }
        for (a, b) in back.loads.iter().zip(&case.loads) {
            assert!(rel_close(a.base_power, b.base_power));
            assert!(rel_close(a.base_voltage, b.base_voltage));
        }
        for (a, b) in back.vbs.iter().zip(&case.vbs) {
            assert!(rel_close(a.capacity, b.capacity));
        }
        assert!(rel_close(back.limits.u_minus[0], case.limits.u_minus[0]));
    }

    #[test]
    fn dimensionless_fields_bit_exact() {
        let case = builtin("ieee33_bipolar").unwrap();
        let pu = to_per_unit(&case).unwrap();
        assert_eq!(pu.limits.unbalance.to_bits(), case.limits.unbalance.to_bits());
        for (a, b) in pu.loads.iter().zip(&case.loads) {
            assert_eq!((a.z, a.i, a.p), (b.z, b.i, b.p));
        }
        assert_eq!(pu.profile, case.profile);
    }

    #[test]
    fn bad_base_rejected() {
        let mut case = builtin("feeder5").unwrap();
        case.bases.power = 0.0;
        assert!(matches!(to_per_unit(&case), Err(UnitError::BadBase { .. })));
    }

    #[test]
    fn double_conversion_rejected() {
        let pu = to_per_unit(&builtin("feeder5").unwrap()).unwrap();
        assert!(to_per_unit(&pu).is_err());
    }
}
