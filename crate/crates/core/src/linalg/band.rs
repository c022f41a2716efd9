use super::{Ordering, Scalar};
use crate::{Error, Result};

/// Pivots below this fraction of the largest matrix entry count as a
/// collapse: the shifted operator is treated as non-injective.
pub const PIVOT_COLLAPSE: f64 = 1e-14;

/// LU factorization with partial pivoting of a banded matrix, stored
/// LAPACK `gbtrf` style (column-major band with `kl` extra rows for fill).
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<T>,
    ipiv: Vec<usize>,
    ordering: Ordering,
    min_pivot_ratio: f64,
}

impl<T: Scalar> BandLu<T> {
    /// Factor the matrix given by `entries` (original indexing, duplicates
    /// summed) after permuting symmetrically with `ordering`.
    pub fn factor(entries: &[(usize, usize, T)], ordering: Ordering) -> Result<Self> {
        let n = ordering.len();
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in entries {
            let (ni, nj) = (ordering.new_index(i), ordering.new_index(j));
            if ni > nj {
                kl = kl.max(ni - nj);
            } else {
                ku = ku.max(nj - ni);
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![T::zero(); ldab * n];
        let mut scale = 0.0f64;
        for &(i, j, v) in entries {
            let (ni, nj) = (ordering.new_index(i), ordering.new_index(j));
            ab[kl + ku + ni - nj + nj * ldab] += v;
        }
        for v in &ab {
            scale = scale.max(v.abs());
        }
        let mut lu = BandLu {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv: vec![0; n],
            ordering,
            min_pivot_ratio: f64::INFINITY,
        };
        lu.decompose(scale)?;
        Ok(lu)
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        // Row i, column j of the working matrix (kl extra rows on top).
        self.kl + self.ku + i - j + j * self.ldab
    }

    fn decompose(&mut self, scale: f64) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.ku + self.kl;
        let mut ju = 0usize;
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = self.idx(j, j);
            let mut jp = 0;
            let mut best = -1.0;
            for i in 0..=km {
                let m = self.ab[base + i].abs();
                if m > best {
                    best = m;
                    jp = i;
                }
            }
            self.ipiv[j] = j + jp;
            min_pivot = min_pivot.min(best);
            if best == 0.0 {
                self.min_pivot_ratio = 0.0;
                return Err(Error::Singular {
                    shift: String::new(),
                    pivot_ratio: 0.0,
                });
            }
            ju = ju.max((j + kv - kl + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[base];
            let inv = T::one() / pivot;
            for i in 1..=km {
                self.ab[base + i] *= inv;
            }
            if km == 0 {
                continue;
            }
            // Rank-1 update of the trailing band, column by column.
            let (left, right) = self.ab.split_at_mut((j + 1) * self.ldab);
            let multipliers = &left[base + 1..=base + km];
            for c in j + 1..=ju {
                let off = (c - j - 1) * self.ldab;
                let top = kv + j - c; // row j in column c
                let t = right[off + top];
                if t == T::zero() {
                    continue;
                }
                let col = &mut right[off + top + 1..off + top + 1 + km];
                for (x, &m) in col.iter_mut().zip(multipliers) {
                    *x -= m * t;
                }
            }
        }
        self.min_pivot_ratio = if scale > 0.0 { min_pivot / scale } else { 0.0 };
        if self.min_pivot_ratio < PIVOT_COLLAPSE {
            return Err(Error::Singular {
                shift: String::new(),
                pivot_ratio: self.min_pivot_ratio,
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Smallest |U_jj| relative to the largest matrix entry.
    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot_ratio
    }

    /// Solve `A x = b` in place (original indexing).
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kv = self.kl + self.ku;
        let mut x: Vec<T> = (0..n).map(|k| b[self.ordering.old_index(k)]).collect();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let xj = x[j];
            if xj != T::zero() {
                let base = self.idx(j, j);
                for i in 1..=km {
                    let m = self.ab[base + i];
                    x[j + i] -= m * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let diag = self.ab[self.idx(j, j)];
            x[j] = x[j] / diag;
            let xj = x[j];
            if xj == T::zero() {
                continue;
            }
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                let u = self.ab[self.idx(i, j)];
                x[i] -= u * xj;
            }
        }
        for (k, v) in x.into_iter().enumerate() {
            b[self.ordering.old_index(k)] = v;
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve with the entrywise conjugate matrix: `conj(A) x = b`.
    pub fn solve_conj(&self, b: &[T]) -> Vec<T> {
        let mut x: Vec<T> = b.iter().map(|v| v.conj()).collect();
        self.solve_in_place(&mut x);
        x.iter_mut().for_each(|v| *v = v.conj());
        x
    }
}

impl BandLu<f64> {
    /// Solve a complex right-hand side with a real factorization.
    pub fn solve_complex(&self, b: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        let mut re: Vec<f64> = b.iter().map(|v| v.re).collect();
        let mut im: Vec<f64> = b.iter().map(|v| v.im).collect();
        self.solve_in_place(&mut re);
        self.solve_in_place(&mut im);
        re.into_iter()
            .zip(im)
            .map(|(r, i)| num_complex::Complex64::new(r, i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> Vec<(usize, usize, Complex64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                t.push((
                    i,
                    j,
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                ));
            }
        }
        t
    }

    #[test]
    fn matches_dense_solve() {
        let n = 40;
        let trips = random_banded(n, 3, 5, 7);
        let lu = BandLu::factor(&trips, Ordering::identity(n)).unwrap();
        let mut dense = DMatrix::<Complex64>::zeros(n, n);
        for &(i, j, v) in &trips {
            dense[(i, j)] += v;
        }
        let b: Vec<Complex64> = (0..n).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let x = lu.solve(&b);
        let r = &dense * nalgebra::DVector::from_vec(x.clone()) - nalgebra::DVector::from_vec(b.clone());
        assert!(r.norm() < 1e-10 * (1.0 + nalgebra::DVector::from_vec(x).norm()));

        let y = lu.solve_conj(&b);
        let r = dense.map(|v| v.conj()) * nalgebra::DVector::from_vec(y) - nalgebra::DVector::from_vec(b);
        assert!(r.norm() < 1e-9);
    }

    #[test]
    fn permuted_ordering_gives_same_solution() {
        let n = 25;
        let trips = random_banded(n, 2, 2, 11);
        let b: Vec<Complex64> = (0..n).map(|k| Complex64::new(1.0, k as f64)).collect();
        let x1 = BandLu::factor(&trips, Ordering::identity(n)).unwrap().solve(&b);
        let perm: Vec<usize> = (0..n).rev().collect();
        let x2 = BandLu::factor(&trips, Ordering::from_permutation(perm))
            .unwrap()
            .solve(&b);
        for (a, c) in x1.iter().zip(&x2) {
            assert!((a - c).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        // Rank-deficient: two identical rows.
        let trips: Vec<(usize, usize, f64)> = vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 1, 2.0)];
        let err = BandLu::factor(&trips, Ordering::identity(2)).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }
}
