use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{axpy, dot, norm2};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ArnoldiOutcome {
    /// Ritz values of the operator (not back-transformed).
    pub values: Vec<Complex64>,
    pub vectors: Vec<Vec<Complex64>>,
    /// `|h_{m+1,m} y_m|` estimates.
    pub residuals: Vec<f64>,
    pub steps: usize,
}

/// Plain Arnoldi with reorthogonalised Gram-Schmidt; returns the `wanted`
/// Ritz pairs of largest modulus after `dim` steps.
pub fn arnoldi<Op>(start: Vec<Complex64>, mut op: Op, dim: usize, wanted: usize) -> Result<ArnoldiOutcome>
where
    Op: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let n = start.len();
    let dim = dim.min(n).max(1);
    let nrm = norm2(&start);
    if nrm == 0.0 {
        return Err(Error::InvalidArgument("Arnoldi start vector is zero".into()));
    }
    let mut basis: Vec<Vec<Complex64>> = vec![start.iter().map(|v| v / nrm).collect()];
    let mut h = DMatrix::<Complex64>::zeros(dim + 1, dim);
    let mut steps = 0;
    for j in 0..dim {
        let mut w = op(&basis[j])?;
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                h[(i, j)] += c;
                axpy(-c, q, &mut w);
            }
        }
        let b = norm2(&w);
        h[(j + 1, j)] = Complex64::new(b, 0.0);
        steps = j + 1;
        if b <= 1e-14 * h.view((0, 0), (j + 1, j + 1)).norm() {
            break;
        }
        if j + 1 < dim {
            basis.push(w.iter().map(|v| v / b).collect());
        }
    }
    let m = steps;
    let hm = h.view((0, 0), (m, m)).into_owned();
    let mut values: Vec<Complex64> = hm
        .clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::NotConverged("Hessenberg eigenvalues".into()))?;
    values.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    values.truncate(wanted.min(m));

    let mut vectors = Vec::new();
    let mut residuals = Vec::new();
    for &theta in &values {
        let y = small_eigenvector(&hm, theta);
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (i, q) in basis.iter().take(m).enumerate() {
            axpy(y[i], q, &mut x);
        }
        residuals.push((h[(m, m - 1)] * y[m - 1]).norm());
        vectors.push(x);
    }
    Ok(ArnoldiOutcome {
        values,
        vectors,
        residuals,
        steps,
    })
}

/// Unit eigenvector of a small dense matrix for a known eigenvalue, by two
/// steps of inverse iteration with a slightly perturbed shift.
fn small_eigenvector(h: &DMatrix<Complex64>, theta: Complex64) -> DVector<Complex64> {
    let m = h.nrows();
    let eps = 1e-10 * (1.0 + theta.norm());
    let shifted = h - DMatrix::<Complex64>::identity(m, m) * (theta + Complex64::new(eps, eps));
    let lu = shifted.lu();
    let mut y = DVector::<Complex64>::from_element(m, Complex64::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            let nz = z.norm();
            if nz > 0.0 && nz.is_finite() {
                y = z / Complex64::new(nz, 0.0);
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_eigenvalues_of_upper_triangular() {
        let n = 30;
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = Complex64::new(i as f64 + 1.0, 0.5);
            if i + 1 < n {
                a[(i, i + 1)] = Complex64::new(0.3, 0.0);
            }
        }
        let start = vec![Complex64::new(1.0, 0.0); n];
        let out = arnoldi(
            start,
            |x| Ok((&a * DVector::from_column_slice(x)).iter().copied().collect()),
            n,
            2,
        )
        .unwrap();
        assert!((out.values[0] - Complex64::new(30.0, 0.5)).norm() < 1e-8);
        assert!((out.values[1] - Complex64::new(29.0, 0.5)).norm() < 1e-8);
    }
}
