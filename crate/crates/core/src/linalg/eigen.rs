use nalgebra::{DMatrix, SymmetricEigen};

use super::direct::Cholesky;
use super::{dot, norm2, CsrMatrix, LinalgError};

const BLOCK: usize = 6;
const MAX_ITERS: usize = 3000;
const TOL: f64 = 1e-8;

/// Smallest eigenpair of the symmetric pencil `(A, G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedEig {
    pub value: f64,
    /// Eigenvector normalized to `x^T G x = 1`.
    pub vector: Vec<f64>,
    /// `|A x - lambda G x| / (|A x| + |lambda| |G x|)`.
    pub residual: f64,
    pub iterations: usize,
    /// Whether a Cholesky factorization of `A` succeeded, which certifies that
    /// every eigenvalue is positive.
    pub certified_positive: bool,
}

fn combination(a: &CsrMatrix, alpha: f64, g: &CsrMatrix) -> CsrMatrix {
    a.linear_combination(1.0, g, -alpha)
}

/// Block inverse iteration with Rayleigh-Ritz projection. The shift is
/// zero when `A` is positive definite and otherwise decreased until
/// `A - s G` is.
pub fn min_generalized_eig(a: &CsrMatrix, g: &CsrMatrix) -> Result<GeneralizedEig, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || g.nrows() != n || g.ncols() != n {
        return Err(LinalgError::DimensionMismatch("pencil matrices differ in shape".into()));
    }
    Cholesky::new(g).map_err(|_| LinalgError::Factorization("G is not positive definite".into()))?;
    let (op, certified_positive) = match Cholesky::new(a) {
        Ok(c) => (c, true),
        Err(_) => {
            let scale = a.max_abs().max(1.0);
            let mut shift = -scale;
            loop {
                if let Ok(c) = Cholesky::new(&combination(a, shift, g)) {
                    break (c, false);
                }
                shift *= 10.0;
                if shift < -1e12 * scale {
                    return Err(LinalgError::NotConverged {
                        iterations: 0,
                        residual: f64::INFINITY,
                    });
                }
            }
        }
    };

    let p = BLOCK.min(n);
    // Deterministic, linearly independent start block.
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|i| 1.0 + ((i * (j + 1)) as f64 * 0.79 + j as f64).sin())
                .collect()
        })
        .collect();
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let y: Vec<Vec<f64>> = x.iter().map(|xj| op.solve(&g.mul_vec(xj))).collect();
        let ay: Vec<Vec<f64>> = y.iter().map(|yj| a.mul_vec(yj)).collect();
        let gy: Vec<Vec<f64>> = y.iter().map(|yj| g.mul_vec(yj)).collect();
        let ar = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i])));
        let gr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &gy[j]) + dot(&y[j], &gy[i])));
        let l = gr
            .cholesky()
            .ok_or(LinalgError::NotConverged {
                iterations: it,
                residual,
            })?
            .l();
        let linv = l.clone().try_inverse().ok_or(LinalgError::NotConverged {
            iterations: it,
            residual,
        })?;
        let c = &linv * ar * linv.transpose();
        let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        // Ritz vectors X = Y L^{-T} Q, G-orthonormal.
        let coef = linv.transpose() * &eig.eigenvectors;
        let mut next = vec![vec![0.0; n]; p];
        for (slot, &col) in order.iter().enumerate() {
            for (k, yk) in y.iter().enumerate() {
                let ck = coef[(k, col)];
                for (t, v) in next[slot].iter_mut().zip(yk) {
                    *t += ck * v;
                }
            }
        }
        x = next;
        let lambda = eig.eigenvalues[order[0]];
        let ax = a.mul_vec(&x[0]);
        let gx = g.mul_vec(&x[0]);
        let r: Vec<f64> = ax.iter().zip(&gx).map(|(u, v)| u - lambda * v).collect();
        residual = norm2(&r) / (norm2(&ax) + lambda.abs() * norm2(&gx)).max(f64::MIN_POSITIVE);
        if residual <= TOL {
            return Ok(GeneralizedEig {
                value: lambda,
                vector: x.swap_remove(0),
                residual,
                iterations: it,
                certified_positive,
            });
        }
    }
    Err(LinalgError::NotConverged {
        iterations: MAX_ITERS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::poisson_1d;
    use super::*;

    fn diag(values: &[f64]) -> CsrMatrix {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        CsrMatrix::from_triplets(values.len(), values.len(), &t)
    }

    #[test]
    fn pencil_of_multiples() {
        let g = poisson_1d(30);
        let e = min_generalized_eig(&g, &g).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10);
        assert!(e.certified_positive);
        let a2 = g.linear_combination(2.0, &g, 0.0);
        let e = min_generalized_eig(&a2, &g).unwrap();
        assert!((e.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn poisson_smallest_eigenvalue() {
        let n = 40;
        let a = poisson_1d(n);
        let e = min_generalized_eig(&a, &CsrMatrix::identity(n)).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n + 1) as f64).cos();
        assert!(
            (e.value - exact).abs() < 1e-10 * exact.max(1.0),
            "{} vs {exact}",
            e.value
        );
    }

    #[test]
    fn indefinite_pencil() {
        let a = diag(&[3.0, -2.0, 5.0, 1.0, 4.0, 7.0, 9.0, 2.5]);
        let g = diag(&[1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let e = min_generalized_eig(&a, &g).unwrap();
        assert!((e.value + 1.0).abs() < 1e-10);
        assert!(!e.certified_positive);
    }
}
