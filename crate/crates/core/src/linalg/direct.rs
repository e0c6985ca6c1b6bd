//! Sparse direct solve: reverse Cuthill-McKee reordering followed by a banded
//! LU factorization with partial pivoting (LAPACK `gbtrf` layout).

use std::collections::VecDeque;

use super::sparse::SparseMatrix;
use super::LinalgError;

/// Reverse Cuthill-McKee permutation of the symmetrized pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Breadth-first level structure rooted at `root`: (eccentricity, last level).
fn levels(root: usize, adj: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let mut depth = vec![usize::MAX; adj.len()];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut max_depth = 0;
    let mut last = vec![root];
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if depth[u] == usize::MAX {
                depth[u] = depth[v] + 1;
                if depth[u] > max_depth {
                    max_depth = depth[u];
                    last.clear();
                }
                if depth[u] == max_depth {
                    last.push(u);
                }
                queue.push_back(u);
            }
        }
    }
    (max_depth, last)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = seed;
    let (mut ecc, mut last) = levels(root, adj);
    loop {
        let candidate = *last.iter().min_by_key(|&&u| (degree[u], u)).unwrap();
        let (e, l) = levels(candidate, adj);
        if e > ecc {
            root = candidate;
            ecc = e;
            last = l;
        } else {
            return root;
        }
    }
}

/// LU factors of a row/column-permuted band matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} not square",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ldab * n];
        let mut anorm: f64 = 0.0;
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                ab[c * ldab + kv + r - c] += v;
                anorm = anorm.max(v.abs());
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            pivots: vec![0; n],
            perm,
        };
        lu.factor_in_place(anorm)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        c * self.ldab + self.kl + self.ku + r - c
    }

    fn factor_in_place(&mut self, anorm: f64) -> Result<(), LinalgError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for i in 1..=km {
                let v = self.ab[self.idx(j + i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[j] = j + p;
            if !(best > anorm * 1e-300) || !best.is_finite() {
                return Err(LinalgError::SingularMatrix { index: self.perm[j] });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let (x, y) = (self.idx(j, c), self.idx(j + p, c));
                    self.ab.swap(x, y);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            let col = self.idx(j, j);
            for i in 1..=km {
                self.ab[col + i] /= pivot;
            }
            for c in j + 1..=ju {
                let top = self.idx(j, c);
                let t = self.ab[top];
                if t != 0.0 {
                    for i in 1..=km {
                        let l = self.ab[col + i];
                        self.ab[top + i] -= l * t;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, kl) = (self.n, self.kl);
        let kv = self.kl + self.ku;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                y.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let yj = y[j];
            if yj != 0.0 {
                let col = self.idx(j, j);
                for i in 1..=km {
                    y[j + i] -= self.ab[col + i] * yj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = self.idx(j, j);
            y[j] /= self.ab[col];
            let yj = y[j];
            if yj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    y[i] -= self.ab[col - (j - i)] * yj;
                }
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// One-shot sparse direct solve.
pub fn solve_lu(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs {} for {} rows",
            b.len(),
            a.nrows()
        )));
    }
    let x = BandedLu::factor(a)?.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::SingularMatrix { index: 0 });
    }
    Ok(x)
}
