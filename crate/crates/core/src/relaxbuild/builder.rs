use serde::{Deserialize, Serialize};

use super::varmap::{VarMap, VarSymbol};
use super::{
    linear_zip_row, mccormick, quad_cost_epigraph, vuf_cone_constant, BoundsSet, BuildOptions, Census,
    ObjectiveSpec, RowFamily,
};
use crate::conesolve::{Cone, ConicProgram, CscMatrix};
use crate::netmodel::{port_voltages, to_per_unit, NetworkCase, Port, Topology, Unit};
use crate::pf_oracle::{Dispatch, PfSolution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("invalid case: {0}")]
    Case(String),
    #[error("invalid objective: {0}")]
    Objective(String),
    #[error("bounds do not match the case: {0}")]
    BoundsShape(String),
    #[error("inverted {what} bounds on pole {pole}, element {index}")]
    InvertedBounds { what: &'static str, pole: usize, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxationKind {
    /// Lifted `W`, `v` with McCormick envelopes.
    Mcsocp,
    /// Plain second-order cone relaxation.
    Socp,
}

/// A conic program together with the meaning of its columns and rows.
#[derive(Debug, Clone)]
pub struct BuiltProgram {
    pub kind: RelaxationKind,
    pub program: ConicProgram,
    pub varmap: VarMap,
    /// Family and element (branch, node, load or device index) of each row.
    pub rows: Vec<(RowFamily, usize)>,
    /// Objective split into DG, loss and balancer parts; they sum to `c`.
    pub cost_parts: [Vec<f64>; 3],
    pub cost_offsets: [f64; 3],
    /// Per-unit snapshot the program was built from.
    pub case: NetworkCase,
    pub topology: Topology,
    pub bounds: BoundsSet,
    pub objective_spec: ObjectiveSpec,
    /// `sqrt(a^2 - 2)` of the unbalance cone.
    pub cone_radius: f64,
    /// kW per unit of power.
    pub kw_per_pu: f64,
}

/// Builds the McCormick-envelope relaxation.
pub fn build_mcsocp(
    snapshot: &NetworkCase,
    bounds: &BoundsSet,
    objective: &ObjectiveSpec,
    options: &BuildOptions,
) -> Result<BuiltProgram, BuildError> {
    build(snapshot, bounds, objective, options, RelaxationKind::Mcsocp)
}

/// Builds the second-order cone relaxation without envelopes on `W`.
pub fn build_socp(
    snapshot: &NetworkCase,
    bounds: &BoundsSet,
    objective: &ObjectiveSpec,
    options: &BuildOptions,
) -> Result<BuiltProgram, BuildError> {
    build(snapshot, bounds, objective, options, RelaxationKind::Socp)
}

type Terms = Vec<(usize, f64)>;

/// Rows collected per cone type; each row is `sum coef x + constant`, which
/// must be zero, nonnegative or part of a second-order cone.
#[derive(Default)]
struct Rows {
    zero: Vec<(Terms, f64, RowFamily, usize)>,
    nonneg: Vec<(Terms, f64, RowFamily, usize)>,
    soc: Vec<(Vec<(Terms, f64)>, RowFamily, usize)>,
}

impl Rows {
    fn eq(&mut self, t: Terms, k: f64, f: RowFamily, e: usize) {
        self.zero.push((t, k, f, e));
    }

    fn geq(&mut self, t: Terms, k: f64, f: RowFamily, e: usize) {
        self.nonneg.push((t, k, f, e));
    }

    /// `lo <= x <= hi` as two rows.
    fn boxed(&mut self, x: usize, [lo, hi]: [f64; 2], f: RowFamily, e: usize) {
        self.geq(vec![(x, 1.0)], -lo, f, e);
        self.geq(vec![(x, -1.0)], hi, f, e);
    }

    fn envelope(&mut self, x: usize, y: usize, w: usize, b: [f64; 4], f: RowFamily, e: usize) {
        let rows = mccormick(b[0], b[1], b[2], b[3]).expect("bounds checked before assembly");
        for r in rows {
            self.geq(vec![(w, r.cw), (x, r.cx), (y, r.cy)], r.c0, f, e);
        }
    }

    fn finish(self, n_vars: usize) -> (CscMatrix, Vec<f64>, Vec<Cone>, Vec<(RowFamily, usize)>) {
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let mut fam = Vec::new();
        let mut cones = Vec::new();
        // A x + s = b with s = sum coef x + k, so A = -coef and b = k;
        // zero rows are stored as A = coef, b = -k.
        let mut emit = |terms: &Terms, k: f64, sign: f64, trip: &mut Vec<(usize, usize, f64)>| {
            let row = b.len();
            for &(j, v) in terms {
                if v != 0.0 {
                    trip.push((row, j, sign * v));
                }
            }
            b.push(-sign * k);
        };
        for (t, k, f, e) in &self.zero {
            emit(t, *k, 1.0, &mut trip);
            fam.push((*f, *e));
        }
        if !self.zero.is_empty() {
            cones.push(Cone::Zero(self.zero.len()));
        }
        for (t, k, f, e) in &self.nonneg {
            emit(t, *k, -1.0, &mut trip);
            fam.push((*f, *e));
        }
        if !self.nonneg.is_empty() {
            cones.push(Cone::NonNeg(self.nonneg.len()));
        }
        for (comps, f, e) in &self.soc {
            for (t, k) in comps {
                emit(t, *k, -1.0, &mut trip);
                fam.push((*f, *e));
            }
            cones.push(Cone::SecondOrder(comps.len()));
        }
        let a = CscMatrix::from_triplets(b.len(), n_vars, &trip);
        (a, b, cones, fam)
    }
}

fn check_bounds(bounds: &BoundsSet, topo: &Topology) -> Result<(), BuildError> {
    let nb = topo.n_branches();
    for pole in 0..2 {
        if bounds.l[pole].len() != nb || bounds.v[pole].len() != topo.n_nodes {
            return Err(BuildError::BoundsShape(format!(
                "expected {nb} branches and {} nodes",
                topo.n_nodes
            )));
        }
    }
    if let Some((what, pole, index)) = bounds.first_inverted() {
        return Err(BuildError::InvertedBounds { what, pole, index });
    }
    if bounds.l.iter().chain(&bounds.v).flatten().flatten().any(|x| !x.is_finite()) {
        return Err(BuildError::BoundsShape("non-finite bound".into()));
    }
    Ok(())
}

fn build(
    snapshot: &NetworkCase,
    bounds: &BoundsSet,
    obj: &ObjectiveSpec,
    options: &BuildOptions,
    kind: RelaxationKind,
) -> Result<BuiltProgram, BuildError> {
    let case = match snapshot.unit {
        Unit::Pu => snapshot.clone(),
        Unit::Si => to_per_unit(snapshot).map_err(|e| BuildError::Case(e.to_string()))?,
    };
    let topo = case.topology().map_err(|e| BuildError::Case(e.to_string()))?;
    check_bounds(bounds, &topo)?;
    obj.validate().map_err(BuildError::Objective)?;
    let (_, rho) = vuf_cone_constant(case.limits.unbalance).map_err(BuildError::Case)?;
    let node_of = |id: usize| case.node_index(id).ok_or_else(|| BuildError::Case(format!("unknown node {id}")));

    let n = topo.n_nodes;
    let nb = topo.n_branches();
    let slack = topo.slack;
    let lifted_w = kind == RelaxationKind::Mcsocp;

    // columns
    let mut vm = VarMap::default();
    for pole in 0..2 {
        vm.v[pole] = (0..n).map(|node| vm_push(&mut vm, VarSymbol::V { pole, node })).collect();
    }
    for pole in 0..2 {
        vm.l[pole] = (0..nb).map(|branch| vm_push(&mut vm, VarSymbol::L { pole, branch })).collect();
    }
    if lifted_w {
        let mut w: [Vec<usize>; 2] = Default::default();
        for (pole, wp) in w.iter_mut().enumerate() {
            *wp = (0..nb).map(|branch| vm_push(&mut vm, VarSymbol::W { pole, branch })).collect();
        }
        vm.w = Some(w);
    }
    for pole in 0..2 {
        vm.p[pole] = (0..nb).map(|branch| vm_push(&mut vm, VarSymbol::P { pole, branch })).collect();
    }
    vm.product = (0..n)
        .map(|node| (node != slack).then(|| vm_push(&mut vm, VarSymbol::Product { node })))
        .collect();
    vm.port_load = (0..case.loads.len())
        .map(|load| vm_push(&mut vm, VarSymbol::PortLoad { load }))
        .collect();
    for pole in 0..2 {
        vm.pole_load[pole] = (0..n)
            .map(|node| (node != slack).then(|| vm_push(&mut vm, VarSymbol::PoleLoad { pole, node })))
            .collect();
    }
    vm.dg = (0..case.dgs.len()).map(|dg| vm_push(&mut vm, VarSymbol::Dg { dg })).collect();
    let mut vb_nodes = Vec::new();
    for (k, spec) in case.vbs.iter().enumerate() {
        let node = node_of(spec.node)?;
        vb_nodes.push(node);
        let entry = (node != slack).then(|| {
            [0, 1].map(|port| vm_push(&mut vm, VarSymbol::Vb { vb: k, port }))
        });
        vm.vb.push(entry);
    }
    vm.slack_supply = [0, 1].map(|pole| vm_push(&mut vm, VarSymbol::SlackSupply { pole }));
    let slack_vb = vb_nodes.iter().position(|&i| i == slack);

    // balancer powers priced by the quadratic cost
    let mut priced: Vec<usize> = Vec::new();
    let mut vb_cap: Vec<(usize, f64)> = Vec::new();
    for (k, entry) in vm.vb.iter().enumerate() {
        match entry {
            Some(pair) => {
                for &x in pair {
                    priced.push(x);
                    vb_cap.push((x, case.vbs[k].capacity));
                }
            }
            None => {
                for &x in &vm.slack_supply {
                    priced.push(x);
                }
            }
        }
    }
    let epi = quad_cost_epigraph(obj.a_vb, obj.b_vb, obj.c_vb).map_err(BuildError::Objective)?;
    if !epi.cone.is_empty() {
        vm.epigraph = (0..priced.len())
            .map(|term| vm_push(&mut vm, VarSymbol::CostEpigraph { term }))
            .collect();
    }
    let nv = vm.n_vars();
    let scale = flow_scale(&case, &topo);
    let supply_scale = scale[slack];

    // objective
    let kw = case.bases.power / 1000.0;
    let mut parts = [vec![0.0; nv], vec![0.0; nv], vec![0.0; nv]];
    let mut offsets = [0.0; 3];
    for &x in &vm.dg {
        parts[0][x] += obj.alpha * obj.c_g * kw;
    }
    for pole in 0..2 {
        for b in 0..nb {
            parts[1][vm.l[pole][b]] += obj.beta * obj.c_loss * kw * case.branches[b].r;
        }
    }
    let (ct, cp, c0) = epi.objective;
    for (term, &x) in priced.iter().enumerate() {
        parts[2][x] += obj.gamma * cp * kw;
        offsets[2] += obj.gamma * c0;
        if ct != 0.0 {
            parts[2][vm.epigraph[term]] += obj.gamma * ct;
        }
    }

    let mut rows = Rows::default();

    // zero rows
    let refs = [case.slack.u_plus.powi(2), case.slack.u_minus.powi(2)];
    for pole in 0..2 {
        rows.eq(vec![(vm.v[pole][slack], 1.0)], -refs[pole], RowFamily::SlackVoltage, slack);
    }
    for b in 0..nb {
        let (i, j) = (topo.up[b], topo.down[b]);
        let r = case.branches[b].r;
        for pole in 0..2 {
            let t = vec![
                (vm.v[pole][j], 1.0),
                (vm.v[pole][i], -1.0),
                (vm.p[pole][b], 2.0 * r),
                (vm.l[pole][b], -r * r),
            ];
            rows.eq(t, 0.0, RowFamily::VoltageDrop, b);
        }
    }
    for j in 0..n {
        for pole in 0..2 {
            let mut t: Terms = topo.children[j].iter().map(|&c| (vm.p[pole][c], -1.0)).collect();
            match topo.parent_branch[j] {
                Some(b) => {
                    t.push((vm.p[pole][b], 1.0));
                    t.push((vm.l[pole][b], -case.branches[b].r));
                    t.push((vm.pole_load[pole][j].expect("non-slack"), -1.0));
                    rows.eq(t, 0.0, RowFamily::PowerBalance, j);
                }
                None => {
                    t.push((vm.slack_supply[pole], 1.0));
                    rows.eq(t, 0.0, RowFamily::SlackBalance, j);
                }
            }
        }
    }

    // net pole load: Q± = P_port + b-share - generation, with the b-port
    // share linearised as 1/2 ± (V+ - V-)/8 around nominal
    let mut net: Vec<[Terms; 2]> = vec![Default::default(); n];
    let mut b_nominal = vec![0.0; n];
    let zips: Vec<_> = case.loads.iter().map(|l| linear_zip_row(l, options.zip_sign)).collect();
    for (k, load) in case.loads.iter().enumerate() {
        let i = node_of(load.node)?;
        if i == slack {
            return Err(BuildError::Case("load at the slack node".into()));
        }
        let x = vm.port_load[k];
        match load.port {
            Port::P => net[i][0].push((x, 1.0)),
            Port::N => net[i][1].push((x, 1.0)),
            Port::B => {
                net[i][0].push((x, 0.5));
                net[i][1].push((x, 0.5));
                b_nominal[i] += zips[k].eval(1.0, 1.0, 1.0);
            }
        }
    }
    for (k, dg) in case.dgs.iter().enumerate() {
        let i = node_of(dg.node)?;
        if i == slack {
            return Err(BuildError::Case("generator at the slack node".into()));
        }
        let x = vm.dg[k];
        match dg.port {
            Port::P => net[i][0].push((x, -1.0)),
            Port::N => net[i][1].push((x, -1.0)),
            Port::B => {
                net[i][0].push((x, -0.5));
                net[i][1].push((x, -0.5));
            }
        }
    }
    for (k, entry) in vm.vb.iter().enumerate() {
        if let Some([xp, xn]) = *entry {
            net[vb_nodes[k]][0].push((xp, -1.0));
            net[vb_nodes[k]][1].push((xn, -1.0));
        }
    }
    for j in (0..n).filter(|&j| j != slack) {
        for pole in 0..2 {
            let mut t = std::mem::take(&mut net[j][pole]);
            let s = if pole == 0 { 1.0 } else { -1.0 };
            let g = b_nominal[j] / 8.0;
            if g != 0.0 {
                t.push((vm.v[0][j], s * g));
                t.push((vm.v[1][j], -s * g));
            }
            t.push((vm.pole_load[pole][j].expect("non-slack"), -1.0));
            rows.eq(t, 0.0, RowFamily::NetLoad, j);
        }
    }
    for (k, load) in case.loads.iter().enumerate() {
        let i = node_of(load.node)?;
        let z = zips[k];
        let mut t = vec![(vm.port_load[k], 1.0), (vm.v[0][i], -z.k_plus), (vm.v[1][i], -z.k_minus)];
        if z.k_v != 0.0 {
            t.push((vm.product[i].expect("non-slack"), -z.k_v));
        }
        rows.eq(t, -z.k0, RowFamily::Zip, k);
    }

    // boxes
    for (k, dg) in case.dgs.iter().enumerate() {
        rows.boxed(vm.dg[k], [dg.p_min, dg.p_max], RowFamily::DgBounds, k);
    }
    for &(x, cap) in &vb_cap {
        rows.boxed(x, [0.0, cap], RowFamily::VbBounds, x);
    }
    if let Some(k) = slack_vb {
        for pole in 0..2 {
            rows.boxed(vm.slack_supply[pole], [0.0, case.vbs[k].capacity], RowFamily::SlackSupplyBounds, pole);
        }
    }
    for pole in 0..2 {
        for j in (0..n).filter(|&j| j != slack) {
            rows.boxed(vm.v[pole][j], bounds.v[pole][j], RowFamily::VoltageBox, j);
        }
        for b in 0..nb {
            rows.boxed(vm.l[pole][b], bounds.l[pole][b], RowFamily::CurrentBox, b);
        }
    }
    if let Some(w) = &vm.w {
        for pole in 0..2 {
            for b in 0..nb {
                let [l0, l1] = bounds.l[pole][b];
                let [v0, v1] = bounds.v[pole][topo.up[b]];
                rows.boxed(w[pole][b], [l0 * v0, l1 * v1], RowFamily::WBox, b);
            }
        }
    }
    for j in (0..n).filter(|&j| j != slack) {
        let [p0, p1] = bounds.v[0][j];
        let [m0, m1] = bounds.v[1][j];
        rows.boxed(vm.product[j].expect("non-slack"), [p0 * m0, p1 * m1], RowFamily::ProductBox, j);
    }
    if let Some(w) = &vm.w {
        for b in 0..nb {
            for pole in 0..2 {
                let [l0, l1] = bounds.l[pole][b];
                let [v0, v1] = bounds.v[pole][topo.up[b]];
                let (x, y) = (vm.l[pole][b], vm.v[pole][topo.up[b]]);
                rows.envelope(x, y, w[pole][b], [l0, l1, v0, v1], RowFamily::McCormickW, b);
            }
        }
    }
    for j in (0..n).filter(|&j| j != slack) {
        let [p0, p1] = bounds.v[0][j];
        let [m0, m1] = bounds.v[1][j];
        let (x, y) = (vm.v[0][j], vm.v[1][j]);
        rows.envelope(x, y, vm.product[j].expect("non-slack"), [p0, p1, m0, m1], RowFamily::McCormickV, j);
    }

    // cones, each rotated by a constant near the expected branch flow so
    // that light branches are not resolved as differences of unit terms
    for b in 0..nb {
        let c = scale[topo.down[b]];
        for pole in 0..2 {
            let p = vm.p[pole][b];
            let comps = match &vm.w {
                Some(w) => {
                    // (W/c + c)^2 - (W/c - c)^2 = 4 W
                    let w = w[pole][b];
                    vec![(vec![(w, 1.0 / c)], c), (vec![(p, 2.0)], 0.0), (vec![(w, 1.0 / c)], -c)]
                }
                None => {
                    // (L/c + V c)^2 - (L/c - V c)^2 = 4 L V
                    let (l, v) = (vm.l[pole][b], vm.v[pole][topo.up[b]]);
                    vec![
                        (vec![(l, 1.0 / c), (v, c)], 0.0),
                        (vec![(p, 2.0)], 0.0),
                        (vec![(l, 1.0 / c), (v, -c)], 0.0),
                    ]
                }
            };
            rows.soc.push((comps, RowFamily::PowerCone, b));
        }
    }
    for j in (0..n).filter(|&j| j != slack) {
        let (vp, vn) = (vm.v[0][j], vm.v[1][j]);
        let k = 2.0 / rho;
        let comps = if lifted_w {
            let x = vm.product[j].expect("non-slack");
            vec![
                (vec![(x, 1.0)], 1.0),
                (vec![(vp, k)], 0.0),
                (vec![(vn, k)], 0.0),
                (vec![(x, 1.0)], -1.0),
            ]
        } else {
            vec![
                (vec![(vp, 1.0), (vn, 1.0)], 0.0),
                (vec![(vp, k)], 0.0),
                (vec![(vn, k)], 0.0),
                (vec![(vp, 1.0), (vn, -1.0)], 0.0),
            ]
        };
        rows.soc.push((comps, RowFamily::UnbalanceCone, j));
    }
    for (term, &x) in priced.iter().enumerate().filter(|_| !epi.cone.is_empty()) {
        let t = vm.epigraph[term];
        let cap = vb_cap.iter().find(|(j, _)| *j == x).map_or(supply_scale, |&(_, cap)| cap);
        // same rotation with the cost at full output
        let c = (obj.a_vb.sqrt() * kw * cap).clamp(MIN_CONE_SCALE, 1.0);
        let comps = epi
            .cone
            .iter()
            .map(|&(ct, cp, k)| {
                let mut terms = Vec::new();
                if ct != 0.0 {
                    terms.push((t, ct / c));
                }
                if cp != 0.0 {
                    terms.push((x, cp * kw));
                }
                (terms, k * c)
            })
            .collect();
        rows.soc.push((comps, RowFamily::Epigraph, term));
    }

    let (a, b, cones, fam) = rows.finish(nv);
    let c: Vec<f64> = (0..nv).map(|k| parts[0][k] + parts[1][k] + parts[2][k]).collect();
    Ok(BuiltProgram {
        kind,
        program: ConicProgram { c, a, b, cones },
        varmap: vm,
        rows: fam,
        cost_parts: parts,
        cost_offsets: offsets,
        case,
        topology: topo,
        bounds: bounds.clone(),
        objective_spec: obj.clone(),
        cone_radius: rho,
        kw_per_pu: kw,
    })
}

fn vm_push(vm: &mut VarMap, sym: VarSymbol) -> usize {
    vm.push(sym)
}

const MIN_CONE_SCALE: f64 = 1e-3;

/// Rough flow magnitude through each node from upstream, pu: the sum of
/// load, generation and balancer ratings in its subtree, floored.
fn flow_scale(case: &NetworkCase, topo: &Topology) -> Vec<f64> {
    let mut own = vec![0.0; topo.n_nodes];
    for l in &case.loads {
        own[case.node_index(l.node).expect("validated")] += l.base_power.abs();
    }
    for g in &case.dgs {
        own[case.node_index(g.node).expect("validated")] += g.p_max.abs();
    }
    for v in &case.vbs {
        let i = case.node_index(v.node).expect("validated");
        if i != topo.slack {
            own[i] += 2.0 * v.capacity;
        }
    }
    for &j in topo.order.iter().rev() {
        if let Some(b) = topo.parent_branch[j] {
            own[topo.up[b]] += own[j];
        }
    }
    own.into_iter().map(|x| x.clamp(MIN_CONE_SCALE, 1.0)).collect()
}

impl BuiltProgram {
    /// Objective value including constant offsets.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.objective_parts(x).iter().sum()
    }

    /// `[DG, loss, balancer]` cost at `x`.
    pub fn objective_parts(&self, x: &[f64]) -> [f64; 3] {
        std::array::from_fn(|k| {
            self.cost_parts[k].iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.cost_offsets[k]
        })
    }

    pub fn census(&self) -> Census {
        let mut c = Census {
            n_vars: self.varmap.n_vars(),
            n_w_vars: self.varmap.w.as_ref().map_or(0, |w| w[0].len() + w[1].len()),
            ..Census::default()
        };
        for cone in &self.program.cones {
            match *cone {
                Cone::Zero(k) => c.zero_rows += k,
                Cone::NonNeg(k) => c.nonneg_rows += k,
                Cone::SecondOrder(k) => c.soc_rows += k,
            }
        }
        let mut row = 0;
        for cone in &self.program.cones {
            if let Cone::SecondOrder(_) = cone {
                match self.rows[row].0 {
                    RowFamily::PowerCone => c.power_cones += 1,
                    RowFamily::UnbalanceCone => c.unbalance_cones += 1,
                    RowFamily::Epigraph => c.epigraph_cones += 1,
                    _ => {}
                }
            }
            row += cone.dim();
        }
        let count = |f: RowFamily| self.rows.iter().filter(|r| r.0 == f).count();
        c.mccormick_w_sets = count(RowFamily::McCormickW) / 4;
        c.mccormick_v_sets = count(RowFamily::McCormickV) / 4;
        c
    }

    /// Largest violation of each row at `x`: `|s|` for zero rows, `max(-s, 0)`
    /// for nonnegative rows and the cone distance for second-order blocks.
    pub fn row_violations(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.program.a.mul(x);
        let s: Vec<f64> = self.program.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut out = vec![0.0; s.len()];
        let mut row = 0;
        for cone in &self.program.cones {
            let d = cone.dim();
            match *cone {
                Cone::Zero(_) => (row..row + d).for_each(|i| out[i] = s[i].abs()),
                Cone::NonNeg(_) => (row..row + d).for_each(|i| out[i] = (-s[i]).max(0.0)),
                Cone::SecondOrder(_) => {
                    let tail = s[row + 1..row + d].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let viol = (tail - s[row]).max(0.0);
                    (row..row + d).for_each(|i| out[i] = viol);
                }
            }
            row += d;
        }
        out
    }

    /// Lifts a power-flow state into the program's variable space. The
    /// neutral is dropped; pole voltages are taken to ground.
    pub fn lift(&self, sol: &PfSolution) -> Vec<f64> {
        // dispatch entries keep the units of the case the flow was solved on
        let scale = if sol.unit == Unit::Si { 1.0 / sol.bases.power } else { 1.0 };
        let sol = crate::pf_oracle::convert_solution(sol, Unit::Pu);
        let vm = &self.varmap;
        let topo = &self.topology;
        let case = &self.case;
        let mut x = vec![0.0; vm.n_vars()];
        let u = |i: usize, pole: usize| sol.voltage[i][if pole == 0 { 0 } else { 2 }];
        let cur = |b: usize, pole: usize| sol.branch_current[b][if pole == 0 { 0 } else { 2 }];
        for pole in 0..2 {
            for i in 0..topo.n_nodes {
                x[vm.v[pole][i]] = u(i, pole).powi(2);
            }
            for b in 0..topo.n_branches() {
                let (l, v) = (cur(b, pole).powi(2), u(topo.up[b], pole).powi(2));
                x[vm.l[pole][b]] = l;
                x[vm.p[pole][b]] = u(topo.up[b], pole) * cur(b, pole);
                if let Some(w) = &vm.w {
                    x[w[pole][b]] = l * v;
                }
            }
        }
        for i in 0..topo.n_nodes {
            if let Some(k) = vm.product[i] {
                x[k] = x[vm.v[0][i]] * x[vm.v[1][i]];
            }
            for pole in 0..2 {
                if let Some(k) = vm.pole_load[pole][i] {
                    let b = topo.parent_branch[i].expect("non-slack");
                    let mut q = x[vm.p[pole][b]] - case.branches[b].r * x[vm.l[pole][b]];
                    for &c in &topo.children[i] {
                        q -= x[vm.p[pole][c]];
                    }
                    x[k] = q;
                }
            }
        }
        for (k, load) in case.loads.iter().enumerate() {
            let i = case.node_index(load.node).expect("validated");
            let v = sol.voltage[i];
            x[vm.port_load[k]] = load.power_at(port_voltages(v[0], v[1], v[2])[load.port.index()]);
        }
        let dispatch = &sol.dispatch;
        for (k, &p) in dispatch.dg.iter().enumerate() {
            x[vm.dg[k]] = p * scale;
        }
        for (k, entry) in vm.vb.iter().enumerate() {
            if let Some([xp, xn]) = *entry {
                x[xp] = dispatch.vb[k][0] * scale;
                x[xn] = dispatch.vb[k][1] * scale;
            }
        }
        for pole in 0..2 {
            x[vm.slack_supply[pole]] = topo.children[topo.slack].iter().map(|&c| x[vm.p[pole][c]]).sum();
        }
        let priced = self.priced_powers();
        for (term, &k) in vm.epigraph.iter().enumerate() {
            let p = x[priced[term]] * self.kw_per_pu;
            x[k] = p * p;
        }
        x
    }

    /// Columns of the balancer powers that carry a quadratic cost, in
    /// epigraph order.
    pub fn priced_powers(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for entry in &self.varmap.vb {
            match entry {
                Some(pair) => out.extend_from_slice(pair),
                None => out.extend_from_slice(&self.varmap.slack_supply),
            }
        }
        out
    }

    /// Device set-points at `x`, in the units of `unit`. The slack balancer
    /// entry holds the slack supply.
    pub fn dispatch(&self, x: &[f64], unit: Unit) -> Dispatch {
        let k = if unit == Unit::Si { self.case.bases.power } else { 1.0 };
        let vm = &self.varmap;
        Dispatch {
            dg: vm.dg.iter().map(|&j| x[j] * k).collect(),
            vb: vm
                .vb
                .iter()
                .map(|e| match e {
                    Some([p, n]) => [x[*p] * k, x[*n] * k],
                    None => [x[vm.slack_supply[0]] * k, x[vm.slack_supply[1]] * k],
                })
                .collect(),
        }
    }
}
