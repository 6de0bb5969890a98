//! Homogeneous self-dual interior-point iteration.
//!
//! Zero-cone rows become equality constraints `A_eq x = b_eq`; the remaining
//! rows form `G x + s = h` with `s` in a product of nonnegative orthants and
//! second-order cones. Each iteration solves the quasi-definite system
//!
//! ```text
//! [ dI   A_eq'   G'         ]
//! [ A_eq -dI     0          ]
//! [ G    0       -(W^2 + dI)]
//! ```
//!
//! twice (predictor and corrector), with iterative refinement against the
//! unregularised matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cones::{identity, interior_shift, jordan, jordan_div, max_step, Cone, Scaling};
use super::ldl::LdlFactor;
use super::sparse::{dot, norm_inf, CscMatrix};
use super::{ConicProgram, SolveError, SolveResult, SolveStatus, SolverSettings};

const STATIC_REG: f64 = 1e-8;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 2e-7;
const REFINE_STEPS: usize = 8;
const RUIZ_PASSES: usize = 15;

/// Row partition and scaled data.
struct Problem {
    n: usize,
    c: Vec<f64>,
    a_eq: CscMatrix,
    b_eq: Vec<f64>,
    g: CscMatrix,
    h: Vec<f64>,
    /// Conic segments over the rows of `g`.
    cones: Vec<(Cone, usize)>,
    /// original row of each `a_eq` row / `g` row
    eq_rows: Vec<usize>,
    cone_rows: Vec<usize>,
    /// row scaling (original rows) and column scaling
    d: Vec<f64>,
    e: Vec<f64>,
}

fn partition(prog: &ConicProgram) -> (Vec<usize>, Vec<usize>, Vec<(Cone, usize)>) {
    let mut eq = Vec::new();
    let mut conic = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0;
    for &cone in &prog.cones {
        let dim = cone.dim();
        match cone {
            Cone::Zero(_) => eq.extend(row..row + dim),
            _ => {
                cones.push((cone, conic.len()));
                conic.extend(row..row + dim);
            }
        }
        row += dim;
    }
    (eq, conic, cones)
}

/// Ruiz equilibration: returns row and column scalings. Rows of one
/// second-order cone share a factor.
fn ruiz(prog: &ConicProgram) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (prog.a.nrows, prog.a.ncols);
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    let mut blocks: Vec<(usize, usize, bool)> = Vec::new();
    let mut row = 0;
    for cone in &prog.cones {
        blocks.push((row, row + cone.dim(), matches!(cone, Cone::SecondOrder(_))));
        row += cone.dim();
    }
    for _ in 0..RUIZ_PASSES {
        let mut rmax = vec![0.0f64; m];
        let mut cmax = vec![0.0f64; n];
        for j in 0..n {
            for (i, v) in prog.a.col(j) {
                let x = (v * d[i] * e[j]).abs();
                rmax[i] = rmax[i].max(x);
                cmax[j] = cmax[j].max(x);
            }
        }
        for &(lo, hi, soc) in &blocks {
            if soc {
                let mx = rmax[lo..hi].iter().cloned().fold(0.0, f64::max);
                for r in &mut rmax[lo..hi] {
                    *r = mx;
                }
            }
        }
        let mut done = true;
        for i in 0..m {
            if rmax[i] > 0.0 {
                d[i] /= rmax[i].sqrt();
                done &= (rmax[i] - 1.0).abs() < 1e-3;
            }
        }
        for j in 0..n {
            if cmax[j] > 0.0 {
                e[j] /= cmax[j].sqrt();
                done &= (cmax[j] - 1.0).abs() < 1e-3;
            }
        }
        if done {
            break;
        }
    }
    for v in d.iter_mut().chain(e.iter_mut()) {
        *v = v.clamp(1e-4, 1e4);
    }
    (d, e)
}

impl Problem {
    fn new(prog: &ConicProgram, equilibrate: bool) -> Problem {
        let (eq_rows, cone_rows, cones) = partition(prog);
        let (d, e) = if equilibrate {
            ruiz(prog)
        } else {
            (vec![1.0; prog.a.nrows], vec![1.0; prog.a.ncols])
        };
        let mut a = prog.a.clone();
        a.scale(&d, &e);
        let b: Vec<f64> = prog.b.iter().zip(&d).map(|(x, di)| x * di).collect();
        let c: Vec<f64> = prog.c.iter().zip(&e).map(|(x, ej)| x * ej).collect();
        Problem {
            n: prog.a.ncols,
            c,
            a_eq: a.select_rows(&eq_rows),
            b_eq: eq_rows.iter().map(|&r| b[r]).collect(),
            g: a.select_rows(&cone_rows),
            h: cone_rows.iter().map(|&r| b[r]).collect(),
            cones,
            eq_rows,
            cone_rows,
            d,
            e,
        }
    }

    fn p(&self) -> usize {
        self.b_eq.len()
    }

    fn m(&self) -> usize {
        self.h.len()
    }

    fn degree(&self) -> usize {
        self.cones
            .iter()
            .map(|(c, _)| match c {
                Cone::SecondOrder(_) => 1,
                other => other.dim(),
            })
            .sum()
    }
}

/// KKT system with a fixed pattern and a reusable factorisation.
struct Kkt {
    n: usize,
    p: usize,
    m: usize,
    pattern: CscMatrix,
    /// static part of the values (A entries and static regularisation)
    base: Vec<f64>,
    /// `(slot, cone, i, j)`: slot receives `-W^2[i][j]` of that cone
    wslots: Vec<(usize, usize, usize, usize)>,
    factor: LdlFactor,
    /// current `W^2` blocks
    w2: Vec<Vec<Vec<f64>>>,
}

impl Kkt {
    fn new(pr: &Problem) -> Result<Kkt, SolveError> {
        let (n, p, m) = (pr.n, pr.p(), pr.m());
        let at_eq = pr.a_eq.transpose();
        let gt = pr.g.transpose();
        let mut colptr = vec![0];
        let mut rowval = Vec::new();
        let mut base = Vec::new();
        let mut wslots = Vec::new();
        for _j in 0..n {
            rowval.push(_j);
            base.push(STATIC_REG);
            colptr.push(rowval.len());
        }
        for i in 0..p {
            for (j, v) in at_eq.col(i) {
                rowval.push(j);
                base.push(v);
            }
            rowval.push(n + i);
            base.push(-STATIC_REG);
            colptr.push(rowval.len());
        }
        let mut owner = vec![(0usize, 0usize); m];
        for (ci, &(cone, off)) in pr.cones.iter().enumerate() {
            for k in off..off + cone.dim() {
                owner[k] = (ci, off);
            }
        }
        for k in 0..m {
            for (j, v) in gt.col(k) {
                rowval.push(j);
                base.push(v);
            }
            let (ci, off) = owner[k];
            let cone = pr.cones[ci].0;
            let lo = if matches!(cone, Cone::SecondOrder(_)) { off } else { k };
            for r in lo..=k {
                wslots.push((rowval.len(), ci, r - off, k - off));
                rowval.push(n + p + r);
                base.push(if r == k { -STATIC_REG } else { 0.0 });
            }
            colptr.push(rowval.len());
        }
        let dim = n + p + m;
        let pattern = CscMatrix {
            nrows: dim,
            ncols: dim,
            colptr,
            nzval: vec![0.0; rowval.len()],
            rowval,
        };
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let factor = LdlFactor::symbolic(&pattern, &signs)?;
        Ok(Kkt {
            n,
            p,
            m,
            pattern,
            base,
            wslots,
            factor,
            w2: Vec::new(),
        })
    }

    fn refactor(&mut self, w2: Vec<Vec<Vec<f64>>>) -> Result<(), SolveError> {
        let mut vals = self.base.clone();
        for &(slot, ci, i, j) in &self.wslots {
            vals[slot] -= w2[ci][i][j];
        }
        self.pattern.nzval.clone_from(&vals);
        self.factor.numeric(&vals, DYN_EPS, DYN_DELTA)?;
        self.w2 = w2;
        Ok(())
    }

    /// Unregularised product `K v`.
    fn mul(&self, pr: &Problem, v: &[f64]) -> Vec<f64> {
        let (n, p, m) = (self.n, self.p, self.m);
        let (x, rest) = v.split_at(n);
        let (y, z) = rest.split_at(p);
        let mut out = vec![0.0; n + p + m];
        {
            let (ox, rest) = out.split_at_mut(n);
            let (oy, oz) = rest.split_at_mut(p);
            pr.a_eq.gemv_t(1.0, y, ox);
            pr.g.gemv_t(1.0, z, ox);
            pr.a_eq.gemv(1.0, x, oy);
            pr.g.gemv(1.0, x, oz);
            for (ci, &(cone, off)) in pr.cones.iter().enumerate() {
                let w2 = &self.w2[ci];
                for i in 0..cone.dim() {
                    let mut acc = 0.0;
                    for j in 0..cone.dim() {
                        acc += w2[i][j] * z[off + j];
                    }
                    oz[off + i] -= acc;
                }
            }
        }
        out
    }

    fn solve(&self, pr: &Problem, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.factor.solve(&mut x);
        let scale = norm_inf(rhs).max(1.0);
        for _ in 0..REFINE_STEPS {
            let kx = self.mul(pr, &x);
            let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
            if norm_inf(&r) <= 1e-14 * scale {
                break;
            }
            self.factor.solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        x
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

fn shift_into_cone(pr: &Problem, v: &mut [f64]) {
    let mut alpha = f64::NEG_INFINITY;
    for &(cone, off) in &pr.cones {
        alpha = alpha.max(interior_shift(cone, &v[off..off + cone.dim()]));
    }
    if alpha >= -1e-8 {
        for &(cone, off) in &pr.cones {
            let e = identity(cone);
            for (k, ek) in e.iter().enumerate() {
                v[off + k] += (1.0 + alpha.max(0.0)) * ek;
            }
        }
    }
}

fn initial_point(pr: &Problem, kkt: &mut Kkt, seed: Option<u64>) -> Result<Iterate, SolveError> {
    let (n, p, m) = (pr.n, pr.p(), pr.m());
    let eye: Vec<Vec<Vec<f64>>> = pr
        .cones
        .iter()
        .map(|&(cone, _)| {
            let d = cone.dim();
            (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        })
        .collect();
    kkt.refactor(eye)?;
    let mut rhs = vec![0.0; n + p + m];
    rhs[n..n + p].copy_from_slice(&pr.b_eq);
    rhs[n + p..].copy_from_slice(&pr.h);
    let sol = kkt.solve(pr, &rhs);
    let mut x = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n + p..].iter().map(|v| -v).collect();
    let mut rhs = vec![0.0; n + p + m];
    for (r, ci) in rhs.iter_mut().zip(&pr.c) {
        *r = -ci;
    }
    let sol = kkt.solve(pr, &rhs);
    let y = sol[n..n + p].to_vec();
    let mut z = sol[n + p..].to_vec();
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in x.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        for &(cone, off) in &pr.cones {
            let (a, b) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            for (k, ek) in identity(cone).iter().enumerate() {
                s[off + k] += a * ek;
                z[off + k] += b * ek;
            }
        }
    }
    shift_into_cone(pr, &mut s);
    shift_into_cone(pr, &mut z);
    Ok(Iterate {
        x,
        y,
        s,
        z,
        tau: 1.0,
        kappa: 1.0,
    })
}

/// Unscaled quantities used for termination and reporting.
struct Unscaled {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

fn unscale(pr: &Problem, it: &Iterate, div: f64, m_total: usize) -> Unscaled {
    let x: Vec<f64> = it.x.iter().zip(&pr.e).map(|(v, e)| v * e / div).collect();
    let mut y = vec![0.0; m_total];
    let mut s = vec![0.0; m_total];
    for (k, &r) in pr.eq_rows.iter().enumerate() {
        y[r] = it.y[k] * pr.d[r] / div;
    }
    for (k, &r) in pr.cone_rows.iter().enumerate() {
        y[r] = it.z[k] * pr.d[r] / div;
        s[r] = it.s[k] / pr.d[r] / div;
    }
    Unscaled { x, y, s }
}

struct Measures {
    pres: f64,
    dres: f64,
    gap: f64,
    pobj: f64,
    p_ok: bool,
    d_ok: bool,
    g_ok: bool,
    /// worst residual relative to its tolerance
    score: f64,
    reduced_ok: bool,
}

fn measure(prog: &ConicProgram, u: &Unscaled, st: &SolverSettings) -> Measures {
    let ax = prog.a.mul(&u.x);
    let r: Vec<f64> = (0..prog.n_rows()).map(|i| ax[i] + u.s[i] - prog.b[i]).collect();
    let aty = prog.a.mul_t(&u.y);
    let rd: Vec<f64> = aty.iter().zip(&prog.c).map(|(a, c)| a + c).collect();
    let pobj = dot(&prog.c, &u.x);
    let dobj = -dot(&prog.b, &u.y);
    let pres = norm_inf(&r);
    let dres = norm_inf(&rd);
    let gap = (pobj - dobj).abs();
    let p_scale = norm_inf(&ax).max(norm_inf(&u.s)).max(norm_inf(&prog.b));
    let d_scale = norm_inf(&aty).max(norm_inf(&prog.c));
    let g_scale = pobj.abs().max(dobj.abs());
    let tol = |scale: f64| st.eps_abs + st.eps_rel * scale;
    let red = |scale: f64| st.eps_reduced * (1.0 + scale);
    Measures {
        pres,
        dres,
        gap,
        pobj,
        p_ok: pres <= tol(p_scale),
        d_ok: dres <= tol(d_scale),
        g_ok: gap <= tol(g_scale),
        score: (pres / tol(p_scale)).max(dres / tol(d_scale)).max(gap / tol(g_scale)),
        reduced_ok: pres <= red(p_scale) && dres <= red(d_scale) && gap <= red(g_scale),
    }
}

fn cone_dot(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

pub(super) fn solve(prog: &ConicProgram, st: &SolverSettings) -> Result<SolveResult, SolveError> {
    let pr = Problem::new(prog, st.equilibrate);
    let (n, p, m) = (pr.n, pr.p(), pr.m());
    let nu = pr.degree() as f64;
    let mut kkt = Kkt::new(&pr)?;
    let mut it = initial_point(&pr, &mut kkt, st.random_start)?;

    let finish = |status: SolveStatus, it: &Iterate, iterations: usize| -> SolveResult {
        let div = match status {
            SolveStatus::Optimal | SolveStatus::AlmostOptimal | SolveStatus::IterationLimit => it.tau,
            _ => 1.0,
        };
        let mut u = unscale(&pr, it, div, prog.n_rows());
        match status {
            SolveStatus::PrimalInfeasible => {
                let k = -dot(&prog.b, &u.y);
                u.y.iter_mut().for_each(|v| *v /= k);
            }
            SolveStatus::DualInfeasible => {
                let k = -dot(&prog.c, &u.x);
                u.x.iter_mut().for_each(|v| *v /= k);
                u.s.iter_mut().for_each(|v| *v /= k);
            }
            _ => {}
        }
        let me = measure(prog, &u, st);
        SolveResult {
            status,
            objective: me.pobj,
            primal_residual: me.pres,
            dual_residual: me.dres,
            gap: me.gap,
            x: u.x,
            y: u.y,
            s: u.s,
            iterations,
        }
    };

    // best iterate by scaled residual, returned when progress stops
    let mut best: Option<(f64, bool, Iterate)> = None;
    let stalled = |best: Option<(f64, bool, Iterate)>, it: &Iterate, iter: usize| match best {
        Some((_, true, b)) => finish(SolveStatus::AlmostOptimal, &b, iter),
        _ => finish(SolveStatus::IterationLimit, it, iter),
    };

    for iter in 0..st.max_iterations {
        // termination tests on the unscaled problem
        let u = unscale(&pr, &it, it.tau, prog.n_rows());
        let me = measure(prog, &u, st);
        if me.p_ok && me.d_ok && me.g_ok {
            return Ok(finish(SolveStatus::Optimal, &it, iter));
        }
        if best.as_ref().is_none_or(|b| me.score < b.0) {
            best = Some((me.score, me.reduced_ok, it.clone()));
        }
        if it.kappa > it.tau {
            let h = unscale(&pr, &it, 1.0, prog.n_rows());
            let by = dot(&prog.b, &h.y);
            if by < 0.0 {
                let aty = prog.a.mul_t(&h.y);
                if norm_inf(&aty) / -by <= st.eps_infeasible {
                    return Ok(finish(SolveStatus::PrimalInfeasible, &it, iter));
                }
            }
            let cx = dot(&prog.c, &h.x);
            if cx < 0.0 {
                let mut r = prog.a.mul(&h.x);
                for (ri, si) in r.iter_mut().zip(&h.s) {
                    *ri += si;
                }
                if norm_inf(&r) / -cx <= st.eps_infeasible {
                    return Ok(finish(SolveStatus::DualInfeasible, &it, iter));
                }
            }
        }

        // residuals of the embedding
        let mut rx = vec![0.0; n];
        pr.a_eq.gemv_t(1.0, &it.y, &mut rx);
        pr.g.gemv_t(1.0, &it.z, &mut rx);
        for j in 0..n {
            rx[j] += pr.c[j] * it.tau;
        }
        let mut ry = pr.a_eq.mul(&it.x);
        for i in 0..p {
            ry[i] -= pr.b_eq[i] * it.tau;
        }
        let mut rz = pr.g.mul(&it.x);
        for i in 0..m {
            rz[i] += it.s[i] - pr.h[i] * it.tau;
        }
        let rtau = it.kappa + dot(&pr.c, &it.x) + dot(&pr.b_eq, &it.y) + dot(&pr.h, &it.z);
        let mu = (cone_dot(&it.s, &it.z) + it.tau * it.kappa) / (nu + 1.0);

        // scaling
        let scalings: Vec<Scaling> = pr
            .cones
            .iter()
            .map(|&(cone, off)| {
                let r = off..off + cone.dim();
                Scaling::new(cone, &it.s[r.clone()], &it.z[r])
            })
            .collect();
        let mut lambda = vec![0.0; m];
        for (sc, &(cone, off)) in scalings.iter().zip(&pr.cones) {
            let l = sc.apply(&it.z[off..off + cone.dim()], false);
            lambda[off..off + cone.dim()].copy_from_slice(&l);
        }
        if kkt.refactor(scalings.iter().map(Scaling::w_squared).collect()).is_err() {
            log::trace!("ipm {iter}: factorisation failed");
            return Ok(stalled(best, &it, iter));
        }

        let mut rhs1 = vec![0.0; n + p + m];
        for j in 0..n {
            rhs1[j] = -pr.c[j];
        }
        rhs1[n..n + p].copy_from_slice(&pr.b_eq);
        rhs1[n + p..].copy_from_slice(&pr.h);
        let sol1 = kkt.solve(&pr, &rhs1);
        let (x1, rest) = sol1.split_at(n);
        let (y1, z1) = rest.split_at(p);
        let den_base = dot(&pr.c, x1) + dot(&pr.b_eq, y1) + dot(&pr.h, z1);

        // one direction for given complementarity targets
        let direction = |ds_target: &[f64], dk: f64, sigma: f64| {
            let mut w_ldiv = vec![0.0; m];
            for (sc, &(cone, off)) in scalings.iter().zip(&pr.cones) {
                let r = off..off + cone.dim();
                let u = jordan_div(cone, &lambda[r.clone()], &ds_target[r.clone()]);
                w_ldiv[r].copy_from_slice(&sc.apply(&u, false));
            }
            let f = 1.0 - sigma;
            let mut rhs2 = vec![0.0; n + p + m];
            for j in 0..n {
                rhs2[j] = -f * rx[j];
            }
            for i in 0..p {
                rhs2[n + i] = -f * ry[i];
            }
            for i in 0..m {
                rhs2[n + p + i] = -f * rz[i] - w_ldiv[i];
            }
            let sol2 = kkt.solve(&pr, &rhs2);
            let (x2, rest) = sol2.split_at(n);
            let (y2, z2) = rest.split_at(p);
            let num = -f * rtau - dk / it.tau - (dot(&pr.c, x2) + dot(&pr.b_eq, y2) + dot(&pr.h, z2));
            let dtau = num / (den_base - it.kappa / it.tau);
            let dx: Vec<f64> = x2.iter().zip(x1).map(|(a, b)| a + dtau * b).collect();
            let dy: Vec<f64> = y2.iter().zip(y1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(z1).map(|(a, b)| a + dtau * b).collect();
            // ds = W (lambda \ d_s) - W^2 dz
            let mut ds = vec![0.0; m];
            for (ci, &(cone, off)) in pr.cones.iter().enumerate() {
                let w2 = &kkt.w2[ci];
                for i in 0..cone.dim() {
                    let mut acc = 0.0;
                    for j in 0..cone.dim() {
                        acc += w2[i][j] * dz[off + j];
                    }
                    ds[off + i] = w_ldiv[off + i] - acc;
                }
            }
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            (dx, dy, ds, dz, dtau, dkappa)
        };

        let step_len = |ds: &[f64], dz: &[f64], dtau: f64, dkappa: f64| {
            let mut a = 1.0f64;
            for &(cone, off) in &pr.cones {
                let r = off..off + cone.dim();
                a = max_step(cone, &it.s[r.clone()], &ds[r.clone()], a);
                a = max_step(cone, &it.z[r.clone()], &dz[r], a);
            }
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        // predictor
        let mut ds_aff = vec![0.0; m];
        for &(cone, off) in &pr.cones {
            let r = off..off + cone.dim();
            let ll = jordan(cone, &lambda[r.clone()], &lambda[r.clone()]);
            for (k, v) in ll.iter().enumerate() {
                ds_aff[off + k] = -v;
            }
        }
        let (_, _, ds_a, dz_a, dtau_a, dkappa_a) = direction(&ds_aff, -it.tau * it.kappa, 0.0);
        let alpha_aff = step_len(&ds_a, &dz_a, dtau_a, dkappa_a);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut ds_c = vec![0.0; m];
        for (sc, &(cone, off)) in scalings.iter().zip(&pr.cones) {
            let r = off..off + cone.dim();
            let ws = sc.apply(&ds_a[r.clone()], true);
            let wz = sc.apply(&dz_a[r.clone()], false);
            let corr = jordan(cone, &ws, &wz);
            let ll = jordan(cone, &lambda[r.clone()], &lambda[r.clone()]);
            let e = identity(cone);
            for k in 0..cone.dim() {
                ds_c[off + k] = -ll[k] - corr[k] + sigma * mu * e[k];
            }
        }
        let dk = -it.tau * it.kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, ds, dz, dtau, dkappa) = direction(&ds_c, dk, sigma);
        let alpha = (st.step_fraction * step_len(&ds, &dz, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) || dx.iter().any(|v| !v.is_finite()) {
            log::trace!("ipm {iter}: step {alpha:e}, alpha_aff {alpha_aff:e}");
            return Ok(stalled(best, &it, iter));
        }
        for j in 0..n {
            it.x[j] += alpha * dx[j];
        }
        for i in 0..p {
            it.y[i] += alpha * dy[i];
        }
        for i in 0..m {
            it.s[i] += alpha * ds[i];
            it.z[i] += alpha * dz[i];
        }
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
        // keep the homogeneous iterate bounded
        let scale = it.tau.max(it.kappa);
        if scale > 1e6 || scale < 1e-6 {
            let k = 1.0 / scale;
            for v in it.x.iter_mut().chain(it.y.iter_mut()).chain(it.s.iter_mut()).chain(it.z.iter_mut()) {
                *v *= k;
            }
            it.tau *= k;
            it.kappa *= k;
        }
        log::trace!("ipm {iter}: pres {:.2e} dres {:.2e} gap {:.2e} mu {mu:.2e} alpha {alpha:.3} tau {:.2e} kappa {:.2e} score {:.2e}", me.pres, me.dres, me.gap, it.tau, it.kappa, me.score);
    }
    Ok(stalled(best, &it, st.max_iterations))
}
