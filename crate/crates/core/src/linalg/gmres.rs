use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{dot, norm2, CsrMatrix, LinalgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// Inverse of the diagonal.
    Jacobi,
    /// Inverse of consecutive diagonal blocks of the given size (element
    /// blocks of a discontinuous space).
    BlockJacobi(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions {
    /// Target relative residual `|b - A x| / |b|` in the 2-norm.
    pub tol: f64,
    /// Total number of Krylov steps across restarts.
    pub max_iter: usize,
    pub restart: usize,
    pub preconditioner: Preconditioner,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            restart: 80,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeReport {
    pub iterations: usize,
    pub residual: f64,
}

enum Apply {
    Identity,
    Diagonal(Vec<f64>),
    Blocks(usize, Vec<f64>),
}

impl Apply {
    fn new(a: &CsrMatrix, p: Preconditioner) -> Self {
        let inv_diag = || {
            a.diagonal()
                .into_iter()
                .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect::<Vec<_>>()
        };
        match p {
            Preconditioner::None => Apply::Identity,
            Preconditioner::Jacobi => Apply::Diagonal(inv_diag()),
            Preconditioner::BlockJacobi(bs) if bs <= 1 || !a.nrows().is_multiple_of(bs) => Apply::Diagonal(inv_diag()),
            Preconditioner::BlockJacobi(bs) => {
                let blocks: Vec<f64> = (0..a.nrows() / bs)
                    .into_par_iter()
                    .flat_map_iter(|k| {
                        let base = k * bs;
                        let m = DMatrix::from_fn(bs, bs, |i, j| a.get(base + i, base + j));
                        let inv = m.clone().try_inverse().unwrap_or_else(|| {
                            DMatrix::from_fn(bs, bs, |i, j| {
                                let d = m[(i, i)];
                                if i == j && d != 0.0 {
                                    1.0 / d
                                } else if i == j {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                        });
                        // Row-major storage of the inverse block.
                        (0..bs * bs).map(move |t| inv[(t / bs, t % bs)])
                    })
                    .collect();
                Apply::Blocks(bs, blocks)
            }
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Apply::Identity => out.copy_from_slice(v),
            Apply::Diagonal(d) => {
                for ((o, x), s) in out.iter_mut().zip(v).zip(d) {
                    *o = x * s;
                }
            }
            Apply::Blocks(bs, inv) => {
                let bs = *bs;
                out.par_chunks_mut(bs).enumerate().for_each(|(k, o)| {
                    let b = &inv[k * bs * bs..(k + 1) * bs * bs];
                    let x = &v[k * bs..(k + 1) * bs];
                    for i in 0..bs {
                        o[i] = (0..bs).map(|j| b[i * bs + j] * x[j]).sum();
                    }
                });
            }
        }
    }
}

/// Restarted GMRES with right preconditioning, so the monitored residual is
/// the true residual of the unpreconditioned system.
pub fn solve_iterative(
    a: &CsrMatrix,
    b: &[f64],
    opts: &IterativeOptions,
) -> Result<(Vec<f64>, IterativeReport), LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{} x {} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            IterativeReport {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let m = opts.restart.max(1);
    let pre = Apply::new(a, opts.preconditioner);
    let mut iterations = 0;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        a.mul_vec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= opts.tol {
            return Ok((
                x,
                IterativeReport {
                    iterations,
                    residual: rel,
                },
            ));
        }
        if !rel.is_finite() {
            return Err(LinalgError::Breakdown { iteration: iterations });
        }
        if iterations >= opts.max_iter {
            return Err(LinalgError::MaxIterations {
                iterations,
                residual: rel,
            });
        }

        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < opts.max_iter {
            pre.apply(&v[k], &mut z);
            a.mul_vec_into(&z, &mut w);
            iterations += 1;
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(hn);
            if denom == 0.0 || !denom.is_finite() {
                return Err(LinalgError::Breakdown { iteration: iterations });
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hn / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            if hn == 0.0 || g[k].abs() / bnorm <= opts.tol {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            for (u, vj) in update.iter_mut().zip(vi) {
                *u += yi * vj;
            }
        }
        pre.apply(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}
