use std::io::Write;

use super::LinalgError;

/// Triplet accumulator. Duplicate `(i, j)` entries are summed, in insertion
/// order, when the matrix is built.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            i < self.nrows && j < self.ncols,
            "({i},{j}) outside {}x{}",
            self.nrows,
            self.ncols
        );
        self.rows.push(i);
        self.cols.push(j);
        self.vals.push(v);
    }

    /// Adds every stored entry of `m`, shifted by `(row_offset, col_offset)`.
    pub fn push_matrix(&mut self, m: &SparseMatrix, row_offset: usize, col_offset: usize, scale: f64) {
        for i in 0..m.nrows() {
            for (j, v) in m.row(i) {
                self.push(i + row_offset, j + col_offset, scale * v);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn build(self) -> SparseMatrix {
        let n = self.nrows;
        let mut counts = vec![0usize; n + 1];
        for &r in &self.rows {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        // Stable bucket by row, then stable sort within each row by column.
        let mut next = counts.clone();
        let mut order = vec![0usize; self.vals.len()];
        for (k, &r) in self.rows.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(self.vals.len());
        let mut values = Vec::with_capacity(self.vals.len());
        row_ptr.push(0);
        for i in 0..n {
            let slice = &mut order[counts[i]..counts[i + 1]];
            slice.sort_by_key(|&k| self.cols[k]);
            let mut last = usize::MAX;
            for &k in slice.iter() {
                let c = self.cols[k];
                if c == last {
                    *values.last_mut().unwrap() += self.vals[k];
                } else {
                    col_idx.push(c);
                    values.push(self.vals[k]);
                    last = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            nrows: n,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CooBuilder::new(nrows, ncols).build()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = CooBuilder::new(rows.len(), ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = CooBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                b.push(j, i, v);
            }
        }
        b.build()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Largest `|a_ij - a_ji|`; requires a square matrix.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - t.get(i, j)).abs());
            }
            for (j, v) in t.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Imposes `x[dofs[k]] = values[k]` by symmetric elimination: constrained
    /// rows become identity rows, constrained columns are zeroed and their
    /// contribution moved to the right-hand side. SPD matrices stay SPD.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], dofs: &[usize], values: &[f64]) -> Result<(), LinalgError> {
        if dofs.len() != values.len() || rhs.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} dofs, {} values, rhs {} for {} rows",
                dofs.len(),
                values.len(),
                rhs.len(),
                self.nrows
            )));
        }
        let n = self.nrows;
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for (&d, &v) in dofs.iter().zip(values) {
            if d >= n || d >= self.ncols {
                return Err(LinalgError::DofOutOfRange { dof: d, size: n });
            }
            fixed[d] = Some(v);
        }
        if dofs.iter().any(|&d| self.diag_position(d).is_none()) {
            self.insert_missing_diagonals(dofs);
        }
        for i in 0..n {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            if let Some(g) = fixed[i] {
                for k in range {
                    self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = g;
            } else {
                for k in range {
                    if let Some(g) = fixed[self.col_idx[k]] {
                        rhs[i] -= self.values[k] * g;
                        self.values[k] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }

    fn diag_position(&self, i: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].binary_search(&i).ok().map(|k| r.start + k)
    }

    fn insert_missing_diagonals(&mut self, dofs: &[usize]) {
        let mut b = CooBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + dofs.len());
        b.push_matrix(self, 0, 0, 1.0);
        for &d in dofs {
            b.push(d, d, 0.0);
        }
        *self = b.build();
    }

    /// MatrixMarket coordinate (general, real) export.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `b - A x`.
pub fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = CooBuilder::new(2, 2);
        b.push(1, 0, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 0, 3.5);
        b.push(0, 0, -1.0);
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 0), 4.5);
        assert_eq!(m.col_indices(), &[0, 1, 0]);
    }

    #[test]
    fn dirichlet_pin_first_dof() {
        let mut a = laplacian_1d(3);
        let mut b = vec![0.0; 3];
        a.apply_dirichlet(&mut b, &[0], &[1.0]).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(b, vec![1.0, 1.0, 0.0]);
        let x = crate::linalg::solve_lu(&a, &b).unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn dirichlet_pin_all() {
        let mut a = laplacian_1d(4);
        let mut b = vec![9.0; 4];
        let vals = [1.0, -2.0, 3.0, 0.5];
        a.apply_dirichlet(&mut b, &[0, 1, 2, 3], &vals).unwrap();
        let x = crate::linalg::solve_lu(&a, &b).unwrap();
        assert_eq!(x, vals.to_vec());
    }

    #[test]
    fn dirichlet_idempotent() {
        let mut a = laplacian_1d(6);
        let mut b: Vec<f64> = (0..6).map(|i| i as f64).collect();
        a.apply_dirichlet(&mut b, &[0, 5], &[1.0, 2.0]).unwrap();
        let (a1, b1) = (a.clone(), b.clone());
        a.apply_dirichlet(&mut b, &[0, 5], &[1.0, 2.0]).unwrap();
        assert_eq!(a, a1);
        assert_eq!(b, b1);
    }

    #[test]
    fn dirichlet_out_of_range() {
        let mut a = laplacian_1d(3);
        let mut b = vec![0.0; 3];
        assert!(matches!(
            a.apply_dirichlet(&mut b, &[3], &[0.0]),
            Err(LinalgError::DofOutOfRange { dof: 3, .. })
        ));
    }

    #[test]
    fn dirichlet_inserts_missing_diagonal() {
        let mut a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mut b = vec![1.0, 2.0];
        a.apply_dirichlet(&mut b, &[0], &[5.0]).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(b, vec![5.0, -3.0]);
    }

    #[test]
    fn matrix_market_header() {
        let mut out = Vec::new();
        laplacian_1d(2).write_matrix_market(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 2e0\n"));
    }

    proptest! {
        #[test]
        fn transpose_is_involution(entries in prop::collection::vec((0usize..7, 0usize..5, -10.0f64..10.0), 0..40)) {
            let mut b = CooBuilder::new(7, 5);
            for (i, j, v) in entries {
                b.push(i, j, v);
            }
            let m = b.build();
            prop_assert_eq!(m.transpose().transpose(), m);
        }

        #[test]
        fn columns_sorted_unique(entries in prop::collection::vec((0usize..6, 0usize..6, -1.0f64..1.0), 0..60)) {
            let mut b = CooBuilder::new(6, 6);
            for (i, j, v) in &entries {
                b.push(*i, *j, *v);
            }
            let m = b.build();
            for i in 0..6 {
                let cols: Vec<usize> = m.row(i).map(|(j, _)| j).collect();
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            }
            let dense_sum: f64 = entries.iter().map(|e| e.2).sum();
            let stored: f64 = m.values().iter().sum();
            prop_assert!((dense_sum - stored).abs() < 1e-9);
        }
    }
}
