//! Compressed sparse row storage used for adjacency and Laplacian matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Square or rectangular CSR matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists.
    ///
    /// Columns inside a row are sorted; duplicate columns are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                assert!(j < n_cols, "column {j} out of bounds for {n_cols} columns");
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    /// Builds a matrix from unordered triplets.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        Self::from_rows(n_cols, rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn iter_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (idx, val) = self.row(i);
        idx.iter().copied().zip(val.iter().copied())
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.iter_row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(p) => val[p],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v));
        }
        Self::from_rows(self.n_rows, rows)
    }

    /// `y = A x`; rows are reduced in a fixed order so results do not depend on
    /// the thread count.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_cols, found: x.len() });
        }
        Ok((0..self.n_rows).into_par_iter().map(|i| self.iter_row(i).map(|(j, v)| v * x[j]).sum()).collect())
    }

    /// Applies `f(i, j, v)` to every stored value, dropping entries mapped to zero.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> Self {
        let rows = (0..self.n_rows)
            .into_par_iter()
            .map(|i| self.iter_row(i).map(|(j, v)| (j, f(i, j, v))).filter(|&(_, v)| v != 0.0).collect::<Vec<_>>())
            .collect();
        Self::from_rows(self.n_cols, rows)
    }

    /// Entrywise `max(A, B)` over the union of both patterns.
    pub fn entrywise_max(&self, other: &Self) -> Self {
        self.combine(other, f64::max)
    }

    /// Entrywise `A + B`.
    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a + b)
    }

    /// Entrywise `A - B`; explicit zeros are kept so the pattern is the union.
    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &Self, op: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let rows = (0..self.n_rows)
            .into_par_iter()
            .map(|i| {
                let (ai, av) = self.row(i);
                let (bi, bv) = other.row(i);
                let (mut p, mut q) = (0, 0);
                let mut out = Vec::with_capacity(ai.len() + bi.len());
                while p < ai.len() || q < bi.len() {
                    let ja = ai.get(p).copied().unwrap_or(usize::MAX);
                    let jb = bi.get(q).copied().unwrap_or(usize::MAX);
                    if ja == jb {
                        out.push((ja, op(av[p], bv[q])));
                        p += 1;
                        q += 1;
                    } else if ja < jb {
                        out.push((ja, op(av[p], 0.0)));
                        p += 1;
                    } else {
                        out.push((jb, op(0.0, bv[q])));
                        q += 1;
                    }
                }
                out
            })
            .collect();
        Self::from_rows(self.n_cols, rows)
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows);
        let rows = (0..self.n_rows)
            .into_par_iter()
            .map(|i| {
                let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
                for (k, a) in self.iter_row(i) {
                    for (j, b) in other.iter_row(k) {
                        *acc.entry(j).or_insert(0.0) += a * b;
                    }
                }
                acc.into_iter().collect::<Vec<_>>()
            })
            .collect();
        Self::from_rows(other.n_cols, rows)
    }

    /// `D_left A D_right` for diagonal scalings given as vectors.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        self.map_entries(|i, j, v| left[i] * v * right[j])
    }

    /// Largest absolute difference between `A` and `Aᵀ` over both patterns.
    pub fn asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n_rows).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Permutes rows and columns: entry `(i, j)` moves to `(perm[i], perm[j])`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (perm[i], perm[j], v)).collect();
        Self::from_triplets(self.n_rows, self.n_cols, &triplets)
    }
}
