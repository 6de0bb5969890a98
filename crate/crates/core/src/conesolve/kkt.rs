use serde::{Deserialize, Serialize};

use super::cones::{project, project_dual, Cone};
use super::sparse::{dot, norm_inf};
use super::ConicProgram;

/// Optimality conditions recomputed from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `||A x + s - b||_inf`, plus the distance of `s` from the cone.
    pub primal: f64,
    /// `||A'y + c||_inf`, plus the distance of `y` from the dual cone.
    pub dual: f64,
    /// `|c'x + b'y|`
    pub gap: f64,
    /// Scales for relative tests: `max(||Ax||, ||s||, ||b||)`,
    /// `max(||A'y||, ||c||)` and `max(|c'x|, |b'y|)`.
    pub primal_scale: f64,
    pub dual_scale: f64,
    pub gap_scale: f64,
}

impl KktReport {
    pub fn within(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.primal <= eps_abs + eps_rel * self.primal_scale
            && self.dual <= eps_abs + eps_rel * self.dual_scale
            && self.gap <= eps_abs + eps_rel * self.gap_scale
    }
}

fn cone_distance(cones: &[Cone], v: &[f64], dual: bool) -> f64 {
    let mut row = 0;
    let mut worst = 0.0f64;
    for &cone in cones {
        let seg = &v[row..row + cone.dim()];
        let proj = if dual { project_dual(cone, seg) } else { project(cone, seg) }.expect("segment length");
        let d = seg.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
        row += cone.dim();
    }
    worst
}

/// Recomputes the residuals of `(x, s, y)` for `prog`.
pub fn check_kkt(prog: &ConicProgram, x: &[f64], s: &[f64], y: &[f64]) -> KktReport {
    let ax = prog.a.mul(x);
    let r: Vec<f64> = (0..prog.n_rows()).map(|i| ax[i] + s[i] - prog.b[i]).collect();
    let aty = prog.a.mul_t(y);
    let rd: Vec<f64> = aty.iter().zip(&prog.c).map(|(a, c)| a + c).collect();
    let cx = dot(&prog.c, x);
    let by = dot(&prog.b, y);
    KktReport {
        primal: norm_inf(&r) + cone_distance(&prog.cones, s, false),
        dual: norm_inf(&rd) + cone_distance(&prog.cones, y, true),
        gap: (cx + by).abs(),
        primal_scale: norm_inf(&ax).max(norm_inf(s)).max(norm_inf(&prog.b)),
        dual_scale: norm_inf(&aty).max(norm_inf(&prog.c)),
        gap_scale: cx.abs().max(by.abs()),
    }
}
