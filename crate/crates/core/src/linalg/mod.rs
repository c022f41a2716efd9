//! Sparse, banded and Krylov linear algebra used by every experiment.
//!
//! Everything the operators need is here: a CSR matrix type for the
//! assembled stencils, a banded LU with partial pivoting for the shifted
//! solves, bandwidth-reducing orderings, and Hermitian Lanczos / Arnoldi
//! drivers that only see the operator through closures.

mod arnoldi;
mod band;
pub mod dense;
mod lanczos;
mod order;
mod sparse;

pub use arnoldi::{arnoldi, ArnoldiOutcome};
pub use band::BandLu;
pub use lanczos::{lanczos, LanczosOptions, LanczosOutcome, RitzPair, Which};
pub use order::Ordering;
pub use sparse::SparseOperator;

use num_complex::{Complex64, ComplexFloat};
use std::fmt::Debug;
use std::ops::{AddAssign, Mul, MulAssign, SubAssign};

/// Field of matrix entries: `f64` or `Complex64`.
pub trait Scalar:
    ComplexFloat<Real = f64>
    + Mul<f64, Output = Self>
    + From<f64>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + Debug
    + 'static
{
    fn modulus_sqr(self) -> f64 {
        let r = self.re();
        let i = self.im();
        r * r + i * i
    }

    fn from_complex(z: Complex64) -> Option<Self>;

    fn real(x: f64) -> Self {
        <Self as From<f64>>::from(x)
    }

    fn to_complex(self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }
}

impl Scalar for f64 {
    fn from_complex(z: Complex64) -> Option<Self> {
        (z.im == 0.0).then_some(z.re)
    }
}

impl Scalar for Complex64 {
    fn from_complex(z: Complex64) -> Option<Self> {
        Some(z)
    }
}

/// `sum_i x_i * conj(y_i)`.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b.conj())
}

pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.modulus_sqr()).sum::<f64>().sqrt()
}

pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x {
        *xi *= alpha;
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&r| Complex64::new(r, 0.0)).collect()
}
