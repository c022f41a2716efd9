//! Small dense helpers on top of nalgebra, used by oracles and Krylov
//! post-processing.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

/// Largest dimension accepted by the dense routines.
pub const DENSE_LIMIT: usize = 1000;

/// Singular values in ascending order.
pub fn singular_values(m: DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

pub fn sigma_min(m: DMatrix<Complex64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending,
/// eigenvectors as matching columns.
pub fn symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues_real(m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() > DENSE_LIMIT {
        return Err(Error::TooLarge(m.nrows()));
    }
    let schur = m
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| Error::NotConverged("real Schur decomposition".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}
