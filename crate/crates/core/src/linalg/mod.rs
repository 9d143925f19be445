//! Compressed sparse row storage and the linear solvers built on it.

mod direct;
mod eigen;
mod gmres;

pub use direct::{solve_direct, LuFactorization};
pub use eigen::{min_generalized_eig, GeneralizedEig};
pub use gmres::{solve_iterative, IterativeOptions, IterativeReport, Preconditioner};

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (first bad pivot at index {pivot:?})")]
    SingularMatrix { pivot: Option<usize> },
    #[error("iteration limit {iterations} reached with relative residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("Krylov breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("eigensolver did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Square or rectangular matrix in compressed sparse row form with strictly
/// increasing column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Rows per parallel task in matrix-vector products.
const ROW_CHUNK: usize = 2048;

impl CsrMatrix {
    /// Wraps raw CSR arrays; panics if the structure is inconsistent.
    pub fn new(nrows: usize, ncols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        for i in 0..nrows {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            assert!(
                cols.windows(2).all(|w| w[0] < w[1]),
                "row {i} columns not strictly increasing"
            );
            assert!(cols.last().is_none_or(|&c| c < ncols));
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t = triplets.to_vec();
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut k = 0;
        while k < t.len() {
            let (i, j, mut v) = t[k];
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            k += 1;
            while k < t.len() && t[k].0 == i && t[k].1 == j {
                v += t[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
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

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x`, parallel over row chunks.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * ROW_CHUNK;
            for (r, yi) in chunk.iter_mut().enumerate() {
                let i = base + r;
                let mut s = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[k] * x[self.col_idx[k]];
                }
                *yi = s;
            }
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut row_ptr = vec![0; self.ncols + 1];
        for &j in &self.col_idx {
            row_ptr[j + 1] += 1;
        }
        for j in 0..self.ncols {
            row_ptr[j + 1] += row_ptr[j];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                col_idx[next[j]] = i;
                values[next[j]] = self.values[k];
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `a A + b B` over the union of both patterns.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < c1.len() || q < c2.len() {
                let (j, v) = match (c1.get(p), c2.get(q)) {
                    (Some(&j1), Some(&j2)) if j1 == j2 => {
                        p += 1;
                        q += 1;
                        (j1, a * v1[p - 1] + b * v2[q - 1])
                    }
                    (Some(&j1), Some(&j2)) if j1 < j2 => {
                        p += 1;
                        (j1, a * v1[p - 1])
                    }
                    (Some(&j1), None) => {
                        p += 1;
                        (j1, a * v1[p - 1])
                    }
                    (_, Some(&j2)) => {
                        q += 1;
                        (j2, b * v2[q - 1])
                    }
                    (None, None) => unreachable!(),
                };
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `(A + A^T) / 2`.
    pub fn symmetric_part(&self) -> Self {
        self.linear_combination(0.5, &self.transpose(), 0.5)
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        self.linear_combination(1.0, &self.transpose(), -1.0).max_abs()
    }

    /// Restriction to the rows and columns listed in `keep` (sorted).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in keep {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: keep.len(),
            ncols: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Coordinate text dump, one `i j value` line per stored entry, 0-based.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `max_i |(A x - b)_i| / max(|b|_inf, tiny)`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.mul_vec(x);
    let num = r.iter().zip(b).fold(0.0, |m: f64, (ri, bi)| m.max((ri - bi).abs()));
    num / norm_inf(b).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 1D Poisson matrix `tridiag(-1, 2, -1)`.
    pub fn poisson_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let a = CsrMatrix::from_triplets(
            2,
            3,
            &[(1, 2, 1.0), (0, 0, 1.0), (1, 2, 2.0), (0, 1, 1.0), (0, 1, -1.0)],
        );
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 2), 3.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.row_ptr(), &[0, 1, 2]);
    }

    #[test]
    fn transpose_and_symmetry() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 0, 1.0), (2, 2, 5.0)]);
        let t = a.transpose();
        assert_eq!(t.get(1, 0), 2.0);
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(a.asymmetry(), 1.0);
        let s = a.symmetric_part();
        assert_eq!(s.get(0, 1), 1.5);
        assert_eq!(s.asymmetry(), 0.0);
        assert_eq!(poisson_1d(5).asymmetry(), 0.0);
    }

    #[test]
    fn submatrix_and_dump() {
        let a = poisson_1d(4);
        let s = a.submatrix(&[1, 3]);
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 0), 2.0);
        let mut buf = Vec::new();
        CsrMatrix::identity(2).write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("0 0 1"));
    }

    proptest! {
        #[test]
        fn mul_vec_matches_dense(entries in prop::collection::vec((0usize..7, 0usize..5, -3.0f64..3.0), 0..40),
                                 x in prop::collection::vec(-2.0f64..2.0, 5)) {
            let a = CsrMatrix::from_triplets(7, 5, &entries);
            let mut dense = [[0.0; 5]; 7];
            for &(i, j, v) in &entries {
                dense[i][j] += v;
            }
            let y = a.mul_vec(&x);
            for i in 0..7 {
                let want: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
                prop_assert!((y[i] - want).abs() < 1e-12);
            }
            let t = a.transpose().transpose();
            prop_assert_eq!(t, a);
        }
    }
}
