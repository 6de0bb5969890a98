use serde::{Deserialize, Serialize};

/// One segment of the cone product, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// `s = 0`
    Zero(usize),
    /// `s >= 0` elementwise
    NonNeg(usize),
    /// `s_0 >= ||s_1..||`, dimension at least 2
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "Z",
            Cone::NonNeg(_) => "L",
            Cone::SecondOrder(_) => "Q",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("vector of length {got} does not match cone dimension {expected}")]
pub struct LengthMismatch {
    pub got: usize,
    pub expected: usize,
}

/// Euclidean projection of `v` onto `cone`.
pub fn project(cone: Cone, v: &[f64]) -> Result<Vec<f64>, LengthMismatch> {
    if v.len() != cone.dim() {
        return Err(LengthMismatch {
            got: v.len(),
            expected: cone.dim(),
        });
    }
    Ok(match cone {
        Cone::Zero(n) => vec![0.0; n],
        Cone::NonNeg(_) => v.iter().map(|x| x.max(0.0)).collect(),
        Cone::SecondOrder(_) => {
            let t = v[0];
            let nx = norm2(&v[1..]);
            if nx <= t {
                v.to_vec()
            } else if nx <= -t {
                vec![0.0; v.len()]
            } else {
                let a = 0.5 * (t + nx);
                let mut out = Vec::with_capacity(v.len());
                out.push(a);
                out.extend(v[1..].iter().map(|x| a * x / nx));
                out
            }
        }
    })
}

/// Projection onto the dual cone (the zero cone's dual is the whole space).
pub fn project_dual(cone: Cone, v: &[f64]) -> Result<Vec<f64>, LengthMismatch> {
    match cone {
        Cone::Zero(n) if v.len() == n => Ok(v.to_vec()),
        _ => project(cone, v),
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `t^2 - ||x||^2`, computed as a product to limit cancellation.
pub(crate) fn soc_residual(v: &[f64]) -> f64 {
    let nx = norm2(&v[1..]);
    (v[0] - nx) * (v[0] + nx)
}

/// Largest `a` in `[0, amax]` with `v + a dv` in the cone, for `v` interior.
pub(crate) fn max_step(cone: Cone, v: &[f64], dv: &[f64], amax: f64) -> f64 {
    match cone {
        Cone::Zero(_) => amax,
        Cone::NonNeg(_) => v
            .iter()
            .zip(dv)
            .filter(|(_, d)| **d < 0.0)
            .map(|(x, d)| -x / d)
            .fold(amax, f64::min),
        Cone::SecondOrder(_) => {
            // (t + a dt)^2 - ||x + a dx||^2 >= 0 and t + a dt >= 0
            let a2 = dv[0] * dv[0] - dv[1..].iter().map(|d| d * d).sum::<f64>();
            let b = 2.0 * (v[0] * dv[0] - v[1..].iter().zip(&dv[1..]).map(|(x, d)| x * d).sum::<f64>());
            let c = soc_residual(v).max(0.0);
            let mut a = amax;
            if dv[0] < 0.0 {
                a = a.min(-v[0] / dv[0]);
            }
            // smallest positive root of a2 t^2 + b t + c
            let root = if a2.abs() < 1e-300 {
                if b < 0.0 {
                    Some(-c / b)
                } else {
                    None
                }
            } else {
                let disc = b * b - 4.0 * a2 * c;
                if disc < 0.0 {
                    None
                } else {
                    let sq = disc.sqrt();
                    // stable roots
                    let q = -0.5 * (b + b.signum() * sq);
                    let r1 = if q != 0.0 { c / q } else { f64::INFINITY };
                    let r2 = if a2 != 0.0 { q / a2 } else { f64::INFINITY };
                    [r1, r2].into_iter().filter(|r| *r > 0.0).reduce(f64::min)
                }
            };
            if let Some(r) = root {
                a = a.min(r);
            }
            a.max(0.0)
        }
    }
}

/// Nesterov-Todd scaling for one cone block. `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    NonNeg { w: Vec<f64> },
    Soc { eta: f64, wbar: Vec<f64> },
}

impl Scaling {
    pub(crate) fn new(cone: Cone, s: &[f64], z: &[f64]) -> Scaling {
        match cone {
            Cone::NonNeg(_) => Scaling::NonNeg {
                w: s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect(),
            },
            Cone::SecondOrder(_) => {
                let sr = soc_residual(s).max(f64::MIN_POSITIVE).sqrt();
                let zr = soc_residual(z).max(f64::MIN_POSITIVE).sqrt();
                let sb: Vec<f64> = s.iter().map(|x| x / sr).collect();
                let zb: Vec<f64> = z.iter().map(|x| x / zr).collect();
                let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let mut wbar: Vec<f64> = Vec::with_capacity(s.len());
                wbar.push((sb[0] + zb[0]) / (2.0 * gamma));
                wbar.extend(sb[1..].iter().zip(&zb[1..]).map(|(a, b)| (a - b) / (2.0 * gamma)));
                Scaling::Soc {
                    eta: (sr / zr).sqrt(),
                    wbar,
                }
            }
            Cone::Zero(_) => unreachable!("zero cone rows are handled as equalities"),
        }
    }

    /// `W v` (inverse = false) or `W^{-1} v`.
    pub(crate) fn apply(&self, v: &[f64], inverse: bool) -> Vec<f64> {
        match self {
            Scaling::NonNeg { w } => v
                .iter()
                .zip(w)
                .map(|(x, wi)| if inverse { x / wi } else { x * wi })
                .collect(),
            Scaling::Soc { eta, wbar } => {
                let w0 = wbar[0];
                let w1 = &wbar[1..];
                let sgn = if inverse { -1.0 } else { 1.0 };
                let k = if inverse { 1.0 / eta } else { *eta };
                let w1v: f64 = w1.iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
                let mut out = Vec::with_capacity(v.len());
                out.push(k * (w0 * v[0] + sgn * w1v));
                let coef = sgn * v[0] + w1v / (1.0 + w0);
                out.extend(v[1..].iter().zip(w1).map(|(x, wi)| k * (x + coef * wi)));
                out
            }
        }
    }

    /// Dense `W^2` block, row-major.
    pub(crate) fn w_squared(&self) -> Vec<Vec<f64>> {
        match self {
            Scaling::NonNeg { w } => {
                let n = w.len();
                let mut m = vec![vec![0.0; n]; n];
                for i in 0..n {
                    m[i][i] = w[i] * w[i];
                }
                m
            }
            Scaling::Soc { eta, wbar } => {
                let n = wbar.len();
                let e2 = eta * eta;
                let mut m = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        let j_ij = if i == j {
                            if i == 0 {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            0.0
                        };
                        m[i][j] = e2 * (2.0 * wbar[i] * wbar[j] - j_ij);
                    }
                }
                m
            }
        }
    }
}

/// Jordan product `u o v`.
pub(crate) fn jordan(cone: Cone, u: &[f64], v: &[f64]) -> Vec<f64> {
    match cone {
        Cone::SecondOrder(_) => {
            let mut out = Vec::with_capacity(u.len());
            out.push(u.iter().zip(v).map(|(a, b)| a * b).sum());
            out.extend(u[1..].iter().zip(&v[1..]).map(|(a, b)| u[0] * b + v[0] * a));
            out
        }
        _ => u.iter().zip(v).map(|(a, b)| a * b).collect(),
    }
}

/// Solves `lambda o u = d` for `u`.
pub(crate) fn jordan_div(cone: Cone, lambda: &[f64], d: &[f64]) -> Vec<f64> {
    match cone {
        Cone::SecondOrder(_) => {
            let l0 = lambda[0];
            let l1 = &lambda[1..];
            let det = soc_residual(lambda);
            let l1d1: f64 = l1.iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
            let u0 = (l0 * d[0] - l1d1) / det;
            let mut out = Vec::with_capacity(d.len());
            out.push(u0);
            out.extend(d[1..].iter().zip(l1).map(|(di, li)| (di - u0 * li) / l0));
            out
        }
        _ => d.iter().zip(lambda).map(|(a, b)| a / b).collect(),
    }
}

/// Identity element of the cone.
pub(crate) fn identity(cone: Cone) -> Vec<f64> {
    match cone {
        Cone::SecondOrder(n) => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        }
        _ => vec![1.0; cone.dim()],
    }
}

/// Smallest `a` with `v + a e` in the closed cone (negative if strictly inside).
pub(crate) fn interior_shift(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::SecondOrder(_) => norm2(&v[1..]) - v[0],
        _ => v.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Whether `v` lies in the cone up to `tol`.
pub fn in_cone(cone: Cone, v: &[f64], tol: f64) -> bool {
    match cone {
        Cone::Zero(_) => v.iter().all(|x| x.abs() <= tol),
        Cone::NonNeg(_) => v.iter().all(|&x| x >= -tol),
        Cone::SecondOrder(_) => norm2(&v[1..]) - v[0] <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let q = Cone::SecondOrder(3);
        assert_eq!(project(q, &[3.0, 1.0, 1.0]).unwrap(), vec![3.0, 1.0, 1.0]);
        assert_eq!(project(q, &[0.0, 2.0, 0.0]).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(project(q, &[-3.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(project(Cone::NonNeg(2), &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert_eq!(project(Cone::Zero(2), &[-1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(project(q, &[1.0]).is_err());
    }

    #[test]
    fn scaling_maps_z_and_s_to_the_same_point() {
        let cone = Cone::SecondOrder(4);
        let s = [3.0, 1.0, -0.5, 0.7];
        let z = [2.0, -0.3, 0.9, 0.1];
        let w = Scaling::new(cone, &s, &z);
        let l1 = w.apply(&z, false);
        let l2 = w.apply(&s, true);
        for (a, b) in l1.iter().zip(&l2) {
            assert!((a - b).abs() < 1e-12);
        }
        // W^2 z = s
        let w2 = w.w_squared();
        for i in 0..4 {
            let v: f64 = (0..4).map(|j| w2[i][j] * z[j]).sum();
            assert!((v - s[i]).abs() < 1e-12);
        }
        let back = w.apply(&w.apply(&z, false), true);
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let cone = Cone::SecondOrder(3);
        let l = [2.0, 0.5, -0.7];
        let u = [0.3, -1.0, 2.0];
        let d = jordan(cone, &l, &u);
        let back = jordan_div(cone, &l, &d);
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let cone = Cone::SecondOrder(2);
        // (1, 0) + a (0, 1) leaves the cone at a = 1
        let a = max_step(cone, &[1.0, 0.0], &[0.0, 1.0], 10.0);
        assert!((a - 1.0).abs() < 1e-12);
        let a = max_step(cone, &[1.0, 0.0], &[1.0, 0.0], 10.0);
        assert_eq!(a, 10.0);
    }
}
