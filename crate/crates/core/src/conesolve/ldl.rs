//! Sparse LDL' factorisation of symmetric quasi-definite matrices.
//!
//! Symbolic analysis (ordering, elimination tree, column counts) happens once
//! per sparsity pattern; numeric refactorisation reuses it. Pivots whose sign
//! disagrees with the expected inertia are replaced by a small value of the
//! right sign (dynamic regularisation).

use std::collections::BTreeSet;

use super::sparse::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LdlError {
    #[error("matrix entry ({0}, {1}) lies below the diagonal")]
    NotUpper(usize, usize),
    #[error("missing diagonal entry in column {0}")]
    MissingDiagonal(usize),
    #[error("zero pivot in column {0}")]
    ZeroPivot(usize),
}

/// Minimum-degree ordering of the symmetric pattern given by its upper triangle.
/// Ties are broken by the smaller index, so the result is deterministic.
pub fn minimum_degree(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 0..n {
        for (i, _) in upper.col(j) {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            queue.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (k, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            queue.insert((adj[a].len(), a));
        }
    }
    order
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// original nonzero index -> slot in `ax`
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// expected pivot signs, permuted
    signs: Vec<f64>,
}

impl LdlFactor {
    /// Symbolic analysis of `upper` (upper triangle including a structurally
    /// present diagonal). `signs[i]` is the expected sign of pivot `i`.
    pub fn symbolic(upper: &CscMatrix, signs: &[f64]) -> Result<Self, LdlError> {
        let n = upper.ncols;
        for j in 0..n {
            let mut diag = false;
            for (i, _) in upper.col(j) {
                if i > j {
                    return Err(LdlError::NotUpper(i, j));
                }
                diag |= i == j;
            }
            if !diag {
                return Err(LdlError::MissingDiagonal(j));
            }
        }
        let perm = minimum_degree(upper);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // permuted upper triangle, with a map from original entries
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(upper.nnz());
        for j in 0..n {
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                let (a, b) = (iperm[upper.rowval[p]], iperm[j]);
                entries.push((a.min(b), a.max(b), p));
            }
        }
        entries.sort_by(|x, y| (x.1, x.0).cmp(&(y.1, y.0)));
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut map = vec![0; upper.nnz()];
        for (slot, &(r, c, p)) in entries.iter().enumerate() {
            ai.push(r);
            ap[c + 1] += 1;
            map[p] = slot;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(LdlFactor {
            n,
            signs: perm.iter().map(|&o| signs[o]).collect(),
            perm,
            ax: vec![0.0; ai.len()],
            ap,
            ai,
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorisation with values in the order of the pattern passed
    /// to [`Self::symbolic`]. Pivots with `sign * d <= eps` become `sign * delta`.
    /// Returns the number of regularised pivots.
    pub fn numeric(&mut self, values: &[f64], eps: f64, delta: f64) -> Result<usize, LdlError> {
        let n = self.n;
        for x in self.ax.iter_mut() {
            *x = 0.0;
        }
        for (p, &v) in values.iter().enumerate() {
            self.ax[self.map[p]] += v;
        }
        let mut y_mark = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next = self.lp[..n].to_vec();
        let mut bumped = 0;
        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !y_mark[b] {
                    y_mark[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if y_mark[nx] {
                            break;
                        }
                        y_mark[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let end = next[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                self.lx[end] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[end];
                next[c] += 1;
                y_vals[c] = 0.0;
                y_mark[c] = false;
            }
            let s = self.signs[k];
            if s * self.d[k] <= eps {
                self.d[k] = s * delta;
                bumped += 1;
            }
            if self.d[k] == 0.0 {
                return Err(LdlError::ZeroPivot(self.perm[k]));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(bumped)
    }

    /// Solves `K x = b` in place using the current factors.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upper_of(dense: &[Vec<f64>]) -> CscMatrix {
        let n = dense.len();
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if dense[i][j] != 0.0 || i == j {
                    t.push((i, j, dense[i][j]));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn quasi_definite_solve_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let (nx, ny) = (5 + trial % 4, 3 + trial % 3);
            let n = nx + ny;
            let mut k = vec![vec![0.0; n]; n];
            for i in 0..nx {
                k[i][i] = 1.0 + rng.random::<f64>();
            }
            for i in nx..n {
                k[i][i] = -(0.5 + rng.random::<f64>());
                for j in 0..nx {
                    if rng.random_bool(0.4) {
                        let v = rng.random_range(-2.0..2.0);
                        k[i][j] = v;
                        k[j][i] = v;
                    }
                }
            }
            let upper = upper_of(&k);
            let signs: Vec<f64> = (0..n).map(|i| if i < nx { 1.0 } else { -1.0 }).collect();
            let mut f = LdlFactor::symbolic(&upper, &signs).unwrap();
            assert_eq!(f.numeric(&upper.nzval, 1e-14, 1e-7).unwrap(), 0);
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
            let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * x_true[j]).sum()).collect();
            f.solve(&mut b);
            for i in 0..n {
                assert!((b[i] - x_true[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        let upper = CscMatrix::from_triplets(
            4,
            4,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0), (0, 3, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
        );
        let mut p = minimum_degree(&upper);
        // the hub has the highest degree and goes last
        assert_eq!(*p.last().unwrap(), 3);
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_lower_entries() {
        let m = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(LdlFactor::symbolic(&m, &[1.0, 1.0]), Err(LdlError::NotUpper(1, 0))));
    }
}
