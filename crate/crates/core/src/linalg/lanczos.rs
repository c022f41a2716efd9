use nalgebra::{DMatrix, SymmetricEigen};

use super::{axpy, dot, Scalar};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    /// Algebraically largest Ritz values.
    Largest,
    /// Largest in modulus (shift-invert use).
    LargestMagnitude,
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub wanted: usize,
    /// Residual tolerance relative to each wanted Ritz value.
    pub tol: f64,
    pub max_dim: usize,
    pub max_restarts: usize,
    pub which: Which,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            wanted: 1,
            tol: 1e-12,
            max_dim: 120,
            max_restarts: 8,
            which: Which::Largest,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RitzPair<T> {
    pub value: f64,
    pub vector: Vec<T>,
    /// Estimated `||Op x - theta x||_G` with `||x||_G = 1`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct LanczosOutcome<T> {
    pub pairs: Vec<RitzPair<T>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lanczos with full reorthogonalisation for an operator self-adjoint in
/// the inner product `<x, y> = y^H G x`, where `gram` applies `G`.
///
/// Only `op` and `gram` see the matrix, so the same driver serves shift-
/// invert eigenproblems, inverse normal operators and generalized problems.
pub fn lanczos<T, Op, G>(start: Vec<T>, mut op: Op, gram: G, opts: &LanczosOptions) -> Result<LanczosOutcome<T>>
where
    T: Scalar,
    Op: FnMut(&[T]) -> Result<Vec<T>>,
    G: Fn(&[T]) -> Vec<T>,
{
    let n = start.len();
    if n == 0 {
        return Ok(LanczosOutcome {
            pairs: Vec::new(),
            iterations: 0,
            converged: true,
        });
    }
    let wanted = opts.wanted.min(n);
    let max_dim = opts.max_dim.max(wanted + 2).min(n);
    let mut start = start;
    let mut iterations = 0;
    let mut last: Option<Vec<RitzPair<T>>> = None;

    for _restart in 0..=opts.max_restarts {
        let (pairs, converged, steps) = run(&start, &mut op, &gram, wanted, max_dim, opts)?;
        iterations += steps;
        if converged {
            return Ok(LanczosOutcome {
                pairs,
                iterations,
                converged: true,
            });
        }
        // Restart from the sum of the wanted Ritz vectors.
        let mut next = vec![T::zero(); n];
        for p in &pairs {
            axpy(T::one(), &p.vector, &mut next);
        }
        start = next;
        last = Some(pairs);
    }
    Ok(LanczosOutcome {
        pairs: last.unwrap_or_default(),
        iterations,
        converged: false,
    })
}

type RunResult<T> = (Vec<RitzPair<T>>, bool, usize);

fn g_norm<T: Scalar, G: Fn(&[T]) -> Vec<T>>(x: &[T], gram: &G) -> f64 {
    dot(&gram(x), x).re().max(0.0).sqrt()
}

fn run<T, Op, G>(
    start: &[T],
    op: &mut Op,
    gram: &G,
    wanted: usize,
    max_dim: usize,
    opts: &LanczosOptions,
) -> Result<RunResult<T>>
where
    T: Scalar,
    Op: FnMut(&[T]) -> Result<Vec<T>>,
    G: Fn(&[T]) -> Vec<T>,
{
    let nrm = g_norm(start, gram);
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(Error::InvalidArgument("Lanczos start vector has zero norm".into()));
    }
    let inv = T::real(1.0 / nrm);
    let q0: Vec<T> = start.iter().map(|&v| v * inv).collect();
    let mut basis = vec![q0];
    let mut gbasis = vec![gram(&basis[0])];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;

    loop {
        let j = basis.len() - 1;
        let mut w = op(&basis[j])?;
        if w.iter().any(|v| !v.re().is_finite() || !v.im().is_finite()) {
            return Err(Error::NotConverged("operator produced non-finite values".into()));
        }
        let a = dot(&w, &gbasis[j]).re();
        alpha.push(a);
        scale = scale.max(a.abs());
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for (q, gq) in basis.iter().zip(&gbasis) {
                let c = dot(&w, gq);
                axpy(-c, q, &mut w);
            }
        }
        let gw = gram(&w);
        let b = dot(&gw, &w).re().max(0.0).sqrt();
        let k = alpha.len();
        let breakdown = b <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        let full = k >= max_dim;
        let check = breakdown || full || k >= wanted && (k <= 40 || k % 5 == 0);
        if check {
            let (values, vectors) = tridiagonal_eigen(&alpha, &beta);
            let order = select(&values, opts.which);
            let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let chosen: Vec<usize> = order.into_iter().take(wanted).collect();
            let resid = |i: usize| {
                if breakdown {
                    0.0
                } else {
                    (b * vectors[(k - 1, i)]).abs()
                }
            };
            let converged = chosen.len() == wanted
                && chosen
                    .iter()
                    .all(|&i| resid(i) <= opts.tol * values[i].abs().max(1e-6 * top).max(f64::MIN_POSITIVE));
            if converged || breakdown || full {
                let pairs = chosen
                    .iter()
                    .map(|&i| {
                        let mut x = vec![T::zero(); start.len()];
                        for (r, q) in basis.iter().enumerate() {
                            axpy(T::real(vectors[(r, i)]), q, &mut x);
                        }
                        RitzPair {
                            value: values[i],
                            vector: x,
                            residual: resid(i),
                        }
                    })
                    .collect();
                return Ok((pairs, converged || breakdown, k));
            }
        }
        beta.push(b);
        let inv = T::real(1.0 / b);
        let q: Vec<T> = w.iter().map(|&v| v * inv).collect();
        let gq: Vec<T> = gw.iter().map(|&v| v * inv).collect();
        basis.push(q);
        gbasis.push(gq);
    }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn select(values: &[f64], which: Which) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match which {
        Which::Largest => idx.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
        Which::LargestMagnitude => idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs())),
    }
    idx
}
