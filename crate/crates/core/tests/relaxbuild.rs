mod common;

use bdcdn::conesolve::{solve, SolveStatus, SolverSettings};
use bdcdn::netmodel::*;
use bdcdn::pf_oracle::*;
use bdcdn::relaxbuild::*;
use common::*;
use proptest::prelude::*;

fn opts() -> BuildOptions {
    BuildOptions::default()
}

fn feeder5_program(kind: RelaxationKind) -> BuiltProgram {
    let snap = to_per_unit(&feeder5_extreme()).unwrap();
    let b = initial_bounds(&snap);
    let obj = ObjectiveSpec::dg_sizing();
    match kind {
        RelaxationKind::Mcsocp => build_mcsocp(&snap, &b, &obj, &opts()).unwrap(),
        RelaxationKind::Socp => build_socp(&snap, &b, &obj, &opts()).unwrap(),
    }
}

/// Blocks of the given family as `(element, row range)`, in row order.
fn blocks(built: &BuiltProgram, family: RowFamily) -> Vec<(usize, std::ops::Range<usize>)> {
    let mut out = Vec::new();
    let mut row = 0;
    for cone in &built.program.cones {
        let d = cone.dim();
        if built.rows[row].0 == family {
            out.push((built.rows[row].1, row..row + d));
        }
        row += d;
    }
    out
}

#[test]
fn feeder5_census_matches_topology() {
    let built = feeder5_program(RelaxationKind::Mcsocp);
    let c = built.census();
    let nb = built.topology.n_branches();
    let load_nodes = built.topology.n_nodes - 1;
    assert_eq!(nb, 4);
    assert_eq!(c.power_cones, 2 * nb);
    assert_eq!(c.unbalance_cones, load_nodes);
    assert_eq!(c.mccormick_w_sets, 2 * nb);
    assert_eq!(c.mccormick_v_sets, load_nodes);

    // independent count straight from the row labels
    let count = |f: RowFamily| built.rows.iter().filter(|r| r.0 == f).count();
    assert_eq!(count(RowFamily::PowerCone), 3 * 2 * nb);
    assert_eq!(count(RowFamily::UnbalanceCone), 4 * load_nodes);
    assert_eq!(count(RowFamily::McCormickW), 4 * 2 * nb);
    assert_eq!(count(RowFamily::McCormickV), 4 * load_nodes);
    assert_eq!(c.zero_rows + c.nonneg_rows + c.soc_rows, built.rows.len());
    assert_eq!(built.rows.len(), built.program.b.len());
}

#[test]
fn socp_has_no_w_columns() {
    let mc = feeder5_program(RelaxationKind::Mcsocp);
    let so = feeder5_program(RelaxationKind::Socp);
    assert_eq!(mc.census().n_w_vars, 8);
    assert_eq!(so.census().n_w_vars, 0);
    assert_eq!(mc.varmap.n_vars() - so.varmap.n_vars(), 8);
    assert_eq!(so.census().mccormick_w_sets, 0);
}

#[test]
fn varmap_is_a_bijection() {
    for kind in [RelaxationKind::Mcsocp, RelaxationKind::Socp] {
        let built = feeder5_program(kind);
        assert!(built.varmap.is_bijective());
        assert_eq!(built.varmap.n_vars(), built.program.c.len());
    }
}

#[test]
fn dump_round_trip() {
    let built = feeder5_program(RelaxationKind::Mcsocp);
    let text = dump_program(&built);
    let back = parse_dump(&text).unwrap();
    assert_eq!(back, built.program);
}

#[test]
fn cost_parts_sum_to_objective_vector() {
    let built = feeder5_program(RelaxationKind::Mcsocp);
    for j in 0..built.program.c.len() {
        let s: f64 = built.cost_parts.iter().map(|p| p[j]).sum();
        assert!((s - built.program.c[j]).abs() <= 1e-12 * built.program.c[j].abs().max(1.0));
    }
}

#[test]
fn inverted_bounds_are_rejected() {
    let snap = to_per_unit(&feeder5_extreme()).unwrap();
    let mut b = initial_bounds(&snap);
    b.l[1][2] = [0.5, 0.4];
    let err = build_mcsocp(&snap, &b, &ObjectiveSpec::dg_sizing(), &opts()).unwrap_err();
    assert!(matches!(err, BuildError::InvertedBounds { what: "L", pole: 1, index: 2 }), "{err:?}");
}

#[test]
fn lifted_balanced_flows_satisfy_every_row() {
    let mut checked = 0;
    for seed in 0..20 {
        let case = balanced_radial(seed);
        let pf = solve_pf(&case, None).unwrap();
        if ori_residuals(&case, &pf).max() > 1e-9 {
            continue; // outside the band or ampacity, not a feasible point
        }
        assert!(pf.voltage.iter().all(|u| u[1].abs() < 1e-9), "neutral drifted");
        let snap = to_per_unit(&case).unwrap();
        for kind in [RelaxationKind::Mcsocp, RelaxationKind::Socp] {
            let b = initial_bounds(&snap);
            let built = match kind {
                RelaxationKind::Mcsocp => build_mcsocp(&snap, &b, &ObjectiveSpec::dg_sizing(), &opts()),
                RelaxationKind::Socp => build_socp(&snap, &b, &ObjectiveSpec::dg_sizing(), &opts()),
            }
            .unwrap();
            let x = built.lift(&pf);
            let viol = built.row_violations(&x);
            let (row, worst) = viol.iter().enumerate().fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            assert!(worst <= 1e-8, "seed {seed} {kind:?}: row {row} {:?} violated by {worst:e}", built.rows[row]);
        }
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} feasible cases");
}

#[test]
fn zero_flow_optimum() {
    let case = two_node(0.0, 0.0, 0.0);
    let snap = to_per_unit(&case).unwrap();
    let obj = ObjectiveSpec {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
        ..ObjectiveSpec::dg_sizing()
    };
    for build in [build_mcsocp, build_socp] {
        let built = build(&snap, &initial_bounds(&snap), &obj, &opts()).unwrap();
        let res = solve(&built.program, &SolverSettings::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let vm = &built.varmap;
        for pole in 0..2 {
            assert!(res.x[vm.l[pole][0]].abs() < 1e-7);
            assert!((res.x[vm.v[pole][1]] - 1.0).abs() < 1e-6);
        }
        assert!(built.objective(&res.x).abs() < 1e-7);
    }
}

#[test]
fn taylor_bound_over_the_band() {
    let mut worst: f64 = 0.0;
    for k in 0..=20_000 {
        let v = 0.9025 + (1.1025 - 0.9025) * k as f64 / 20_000.0;
        worst = worst.max(taylor_error(v));
    }
    assert!((worst - 0.00125).abs() < 1e-9, "{worst}");
    assert!((taylor_error(0.9025) - 0.00125).abs() < 1e-12);
    assert!((taylor_error(1.1025) - 0.00125).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn power_cone_is_the_square_bound(p in -2.0f64..2.0, w in 0.0f64..4.0, b in 0usize..4, pole in 0usize..2) {
        prop_assume!((p * p - w).abs() > 1e-9);
        let built = feeder5_program(RelaxationKind::Mcsocp);
        let blk = blocks(&built, RowFamily::PowerCone);
        let range = blk.iter().filter(|(e, _)| *e == b).nth(pole).unwrap().1.clone();
        let mut x = vec![0.0; built.varmap.n_vars()];
        x[built.varmap.p[pole][b]] = p;
        x[built.varmap.w.as_ref().unwrap()[pole][b]] = w;
        let viol = built.row_violations(&x)[range.start];
        prop_assert_eq!(viol == 0.0, p * p <= w, "p {} w {} viol {}", p, w, viol);
    }

    #[test]
    fn unbalance_cone_is_the_quadratic_bound(vp in 0.8f64..1.2, vn in 0.8f64..1.2, v in 0.5f64..1.5, j in 1usize..5) {
        let built = feeder5_program(RelaxationKind::Mcsocp);
        let rho2 = built.cone_radius * built.cone_radius;
        prop_assume!((vp * vp + vn * vn - rho2 * v).abs() > 1e-9);
        let range = blocks(&built, RowFamily::UnbalanceCone).into_iter().find(|(e, _)| *e == j).unwrap().1;
        let vm = &built.varmap;
        let mut x = vec![0.0; vm.n_vars()];
        x[vm.v[0][j]] = vp;
        x[vm.v[1][j]] = vn;
        x[vm.product[j].unwrap()] = v;
        let viol = built.row_violations(&x)[range.start];
        prop_assert_eq!(viol == 0.0, vp * vp + vn * vn <= rho2 * v);
    }

    #[test]
    fn admissible_unbalance_lies_in_the_cone(up in 0.95f64..1.05, r in -0.03f64..0.03) {
        let delta = 0.03;
        let un = up * (2.0 - r) / (2.0 + r);
        prop_assert!((vuf_of(up, un) - r.abs()).abs() < 1e-12);
        let (a, _) = vuf_cone_constant(delta).unwrap();
        let (vp, vn) = (up * up, un * un);
        prop_assert!(vp * vp + vn * vn <= (a * a - 2.0) * vp * vn * (1.0 + 1e-12));
    }

    #[test]
    fn envelope_is_tight_at_corners(x0 in 0.5f64..1.5, dx in 0.0f64..0.5, y0 in 0.5f64..1.5, dy in 0.0f64..0.5) {
        let rows = mccormick(x0, x0 + dx, y0, y0 + dy).unwrap();
        for (x, y) in [(x0, y0), (x0 + dx, y0), (x0, y0 + dy), (x0 + dx, y0 + dy)] {
            let vals = rows.map(|r| r.eval(x, y, x * y));
            prop_assert!(vals.iter().all(|&v| v >= -1e-12));
            prop_assert!(vals.iter().filter(|v| v.abs() <= 1e-12).count() >= 2);
        }
    }

    #[test]
    fn envelope_contains_the_product(x0 in 0.5f64..1.5, dx in 0.0f64..0.5, y0 in 0.5f64..1.5, dy in 0.0f64..0.5, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let rows = mccormick(x0, x0 + dx, y0, y0 + dy).unwrap();
        let (x, y) = (x0 + s * dx, y0 + t * dy);
        prop_assert!(rows.iter().all(|r| r.eval(x, y, x * y) >= -1e-12));
    }
}
