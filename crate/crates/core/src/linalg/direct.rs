use std::sync::Once;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};

use super::{CsrMatrix, LinalgError};

static SEQUENTIAL: Once = Once::new();

/// Factorizations run single-threaded so results do not depend on the
/// worker count.
fn sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

pub(crate) fn to_faer(a: &CsrMatrix) -> SparseColMat<usize, f64> {
    // The CSR arrays of A^T are the CSC arrays of A.
    let t = a.transpose();
    let symbolic =
        SymbolicSparseColMat::new_checked(a.nrows(), a.ncols(), t.row_ptr().to_vec(), None, t.col_idx().to_vec());
    SparseColMat::new(symbolic, t.values().to_vec())
}

fn first_non_finite(x: &[f64]) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}

/// Sparse LU with partial pivoting and a fill-reducing column ordering.
pub struct LuFactorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuFactorization {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} x {} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        sequential();
        let lu = to_faer(a)
            .sp_lu()
            .map_err(|_| LinalgError::SingularMatrix { pivot: None })?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs of length {} for n = {}",
                b.len(),
                self.n
            )));
        }
        let mut x = Col::from_fn(self.n, |i| b[i]);
        self.lu.solve_in_place(x.as_mat_mut());
        let x: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        match first_non_finite(&x) {
            Some(pivot) => Err(LinalgError::SingularMatrix { pivot: Some(pivot) }),
            None => Ok(x),
        }
    }
}

/// Solves `A x = b` by sparse LU.
pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    LuFactorization::new(a)?.solve(b)
}

/// Sparse Cholesky of a symmetric matrix (lower triangle read); fails if the
/// matrix is not numerically positive definite.
pub(crate) struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub(crate) fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        sequential();
        let llt = to_faer(a)
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Col::from_fn(self.n, |i| b[i]);
        self.llt.solve_in_place(x.as_mat_mut());
        (0..self.n).map(|i| x[i]).collect()
    }
}
