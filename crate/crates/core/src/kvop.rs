//! The Kelvin-Voigt block generator `A = [[0, I], [L, D]]`, its energy
//! Gram form, and shifted solves reduced to `N x N` systems.
//!
//! `(A - z)(u, v) = (f, g)` is solved through `K(z) = L + zD - z^2 I`:
//! `u = K^{-1}(g - Df + zf)`, `v = f + zu`. The energy-adjoint is
//! `A* = [[0, -I], [-L, D]]`, and `K(conj z) = conj K(z)`, so one
//! factorization serves both `(A - z)^{-1}` and its adjoint.

use std::io::{self, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::dense::symmetric_eigen;
use crate::linalg::{dot, BandLu, Ordering, SparseOperator};
use crate::mesh::{DampingProfile, Grid};
use crate::{Error, Result};

/// Largest `N` for which the dense `2N x 2N` generator is materialised.
pub const DENSE_BLOCK_LIMIT: usize = 500;

/// State `(u, v)`, with `v` standing for the velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

impl StateVector {
    pub fn new(u: Vec<Complex64>, v: Vec<Complex64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                actual: v.len(),
            });
        }
        Ok(StateVector { u, v })
    }

    pub fn zeros(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        StateVector { u: z.clone(), v: z }
    }

    pub fn from_real(u: &[f64], v: &[f64]) -> Result<Self> {
        Self::new(
            u.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `[u; v]` as one vector of length `2N`.
    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut x = self.u.clone();
        x.extend_from_slice(&self.v);
        x
    }

    pub fn from_flat(x: &[Complex64]) -> Self {
        let n = x.len() / 2;
        StateVector {
            u: x[..n].to_vec(),
            v: x[n..].to_vec(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        StateVector {
            u: self.u.iter().map(|x| x * s).collect(),
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: Complex64, other: &StateVector) -> Self {
        StateVector {
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + s * b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV rows `idx,re_u,im_u,re_v,im_v` after a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "idx,re_u,im_u,re_v,im_v")?;
        for (i, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            writeln!(w, "{i},{:.17e},{:.17e},{:.17e},{:.17e}", u.re, u.im, v.re, v.im)?;
        }
        Ok(())
    }
}

/// Dense spectral factor of `-L = Q diag(lambda) Q^T`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct GramFactor {
    pub q: DMatrix<f64>,
    pub lambda: Vec<f64>,
}

impl GramFactor {
    /// Index of the first eigenvalue treated as nonzero.
    pub fn rank_start(&self) -> usize {
        let top = self.lambda.last().copied().unwrap_or(0.0).abs();
        self.lambda.iter().take_while(|&&l| l <= 1e-10 * top.max(1.0)).count()
    }
}

/// Energy form `W = mu_ref * blockdiag(-L, I)`.
#[derive(Debug)]
pub struct EnergyGram {
    l: Arc<SparseOperator>,
    mu_ref: f64,
    factor: OnceLock<GramFactor>,
}

impl EnergyGram {
    pub fn new(l: Arc<SparseOperator>, mu_ref: f64) -> Self {
        EnergyGram {
            l,
            mu_ref,
            factor: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn mu_ref(&self) -> f64 {
        self.mu_ref
    }

    /// `W x` for a flat state.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let mut out = self.l.apply(&x[..n]);
        for o in &mut out {
            *o *= -self.mu_ref;
        }
        out.extend(x[n..].iter().map(|v| v * self.mu_ref));
        out
    }

    /// `<x, y>_W = y^H W x`.
    pub fn inner(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        dot(&self.apply(x), y)
    }

    pub fn norm_sq(&self, x: &[Complex64]) -> f64 {
        self.inner(x, x).re.max(0.0)
    }

    pub fn norm(&self, x: &[Complex64]) -> f64 {
        self.norm_sq(x).sqrt()
    }

    /// Dense factor of `-L`, computed once (only for `N <= DENSE_BLOCK_LIMIT`).
    pub fn factor(&self) -> Result<&GramFactor> {
        if self.dim() > DENSE_BLOCK_LIMIT {
            return Err(Error::TooLarge(self.dim()));
        }
        Ok(self.factor.get_or_init(|| {
            let (lambda, q) = symmetric_eigen(-self.l.to_dense());
            GramFactor { q, lambda }
        }))
    }

    /// Smallest eigenvalue of `W` (zero on tori).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let f = self.factor()?;
        Ok(self.mu_ref * f.lambda.first().copied().unwrap_or(0.0).min(1.0))
    }
}

/// `||U||_W^2`.
pub fn energy(state: &StateVector, gram: &EnergyGram) -> f64 {
    gram.norm_sq(&state.to_flat())
}

/// The generator with its Gram form and a bandwidth-reducing ordering.
#[derive(Debug)]
pub struct BlockOperator {
    l: Arc<SparseOperator>,
    d: Arc<SparseOperator>,
    gram: EnergyGram,
    periodic: bool,
    ordering: Ordering,
    spacing: f64,
}

/// Assemble `A` from `L` and `D`; `mu_ref` is the reference cell volume.
pub fn build_block(l: SparseOperator, d: SparseOperator, mu_ref: f64) -> Result<BlockOperator> {
    if l.dim() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            actual: d.dim(),
        });
    }
    for (name, m) in [("L", &l), ("D", &d)] {
        if m.symmetry_defect() > 1e-12 * m.max_abs().max(1.0) {
            return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
        }
    }
    let ordering = Ordering::narrowest(&l, [Ordering::identity(l.dim()), Ordering::reverse_cuthill_mckee(&l)]);
    let l = Arc::new(l);
    Ok(BlockOperator {
        gram: EnergyGram::new(l.clone(), mu_ref),
        l,
        d: Arc::new(d),
        periodic: false,
        ordering,
        spacing: 0.0,
    })
}

impl BlockOperator {
    pub fn from_grid(grid: &Grid, damping: &DampingProfile) -> Result<Self> {
        let l = grid.laplacian();
        let d = grid.kv_damping(damping)?;
        let ordering = grid.ordering_for(&l);
        let mut op = build_block(l, d, grid.mu_ref())?;
        op.ordering = ordering;
        op.periodic = grid.is_periodic();
        op.spacing = grid.h_max();
        Ok(op)
    }

    /// Marks `L` as having the constants as kernel (flat tori).
    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn with_spacing(mut self, h: f64) -> Self {
        self.spacing = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn l(&self) -> &SparseOperator {
        &self.l
    }

    pub fn d(&self) -> &SparseOperator {
        &self.d
    }

    pub fn gram(&self) -> &EnergyGram {
        &self.gram
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Largest grid spacing, or 0 when unknown.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    /// Upper bound on the largest undamped frequency `sqrt(||L||)`.
    pub fn nu_max(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| self.l.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn apply_flat(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let (u, v) = x.split_at(n);
        let mut out = v.to_vec();
        let mut lu = self.l.apply(u);
        let dv = self.d.apply(v);
        for (a, b) in lu.iter_mut().zip(dv) {
            *a += b;
        }
        out.extend(lu);
        out
    }

    /// `A* x = (-v, -Lu + Dv)`, the adjoint in the energy inner product.
    pub fn apply_adjoint_flat(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let (u, v) = x.split_at(n);
        let mut out: Vec<Complex64> = v.iter().map(|a| -a).collect();
        let lu = self.l.apply(u);
        let dv = self.d.apply(v);
        out.extend(lu.iter().zip(dv).map(|(a, b)| b - a));
        out
    }

    pub fn apply(&self, s: &StateVector) -> StateVector {
        StateVector::from_flat(&self.apply_flat(&s.to_flat()))
    }

    pub fn apply_adjoint(&self, s: &StateVector) -> StateVector {
        StateVector::from_flat(&self.apply_adjoint_flat(&s.to_flat()))
    }

    /// Discrete `int a |grad v|^2 = -mu_ref v^H D v` (nonnegative).
    pub fn dissipation(&self, v: &[Complex64]) -> f64 {
        -self.gram.mu_ref * self.d.quad_form(v)
    }

    /// Removes the kernel of the energy form (mean of `u`) on tori.
    pub fn project(&self, x: &mut [Complex64]) {
        if !self.periodic {
            return;
        }
        let n = self.dim();
        let mean = x[..n].iter().sum::<Complex64>() / n as f64;
        for v in &mut x[..n] {
            *v -= mean;
        }
    }

    /// The `2N x 2N` matrix `[[0, I], [L, D]]`.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_BLOCK_LIMIT {
            return Err(Error::TooLarge(2 * n));
        }
        let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
        }
        for (i, j, v) in self.l.triplets() {
            a[(n + i, j)] += v;
        }
        for (i, j, v) in self.d.triplets() {
            a[(n + i, n + j)] += v;
        }
        Ok(a)
    }

    /// Factor `K(z) = L + zD - z^2 I`.
    pub fn shifted(&self, z: Complex64) -> Result<ShiftedSolver<'_>> {
        let singular = |e: Error| match e {
            Error::Singular { pivot_ratio, .. } => Error::Singular {
                shift: format!("{z}"),
                pivot_ratio,
            },
            e => e,
        };
        let lu = if z.im == 0.0 {
            let t = self.k_entries(z.re, |v| v);
            Lu::Real(BandLu::factor(&t, self.ordering.clone()).map_err(singular)?)
        } else {
            let t = self.k_entries(z, |v| Complex64::new(v, 0.0));
            Lu::Complex(BandLu::factor(&t, self.ordering.clone()).map_err(singular)?)
        };
        Ok(ShiftedSolver { op: self, z, lu })
    }

    fn k_entries<T>(&self, z: T, lift: impl Fn(f64) -> T) -> Vec<(usize, usize, T)>
    where
        T: Copy + std::ops::Mul<Output = T> + std::ops::Neg<Output = T>,
    {
        let mut t: Vec<(usize, usize, T)> = self.l.triplets().map(|(i, j, v)| (i, j, lift(v))).collect();
        t.extend(self.d.triplets().map(|(i, j, v)| (i, j, z * lift(v))));
        t.extend((0..self.dim()).map(|i| (i, i, -(z * z))));
        t
    }
}

enum Lu {
    Real(BandLu<f64>),
    Complex(BandLu<Complex64>),
}

/// Factorised `A - z`, solving with it and with its energy adjoint.
pub struct ShiftedSolver<'a> {
    op: &'a BlockOperator,
    z: Complex64,
    lu: Lu,
}

impl ShiftedSolver<'_> {
    pub fn shift(&self) -> Complex64 {
        self.z
    }

    pub fn min_pivot_ratio(&self) -> f64 {
        match &self.lu {
            Lu::Real(lu) => lu.min_pivot_ratio(),
            Lu::Complex(lu) => lu.min_pivot_ratio(),
        }
    }

    fn k_solve(&self, b: &[Complex64], conj: bool) -> Vec<Complex64> {
        match &self.lu {
            Lu::Real(lu) => lu.solve_complex(b),
            Lu::Complex(lu) if conj => lu.solve_conj(b),
            Lu::Complex(lu) => lu.solve(b),
        }
    }

    /// `(A - z)^{-1} x` for a flat state.
    pub fn solve_flat(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.op.dim();
        let z = self.z;
        let (f, g) = x.split_at(n);
        let df = self.op.d.apply(f);
        let rhs: Vec<Complex64> = (0..n).map(|i| g[i] - df[i] + z * f[i]).collect();
        let u = self.k_solve(&rhs, false);
        let v: Vec<Complex64> = (0..n).map(|i| f[i] + z * u[i]).collect();
        let mut out = u;
        out.extend(v);
        out
    }

    /// `(A* - conj z)^{-1} x`, the energy adjoint of `(A - z)^{-1}`.
    pub fn solve_adjoint_flat(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.op.dim();
        let w = self.z.conj();
        let (f, g) = x.split_at(n);
        let df = self.op.d.apply(f);
        let rhs: Vec<Complex64> = (0..n).map(|i| -(g[i] + df[i] - w * f[i])).collect();
        let p = self.k_solve(&rhs, true);
        let q: Vec<Complex64> = (0..n).map(|i| -f[i] - w * p[i]).collect();
        let mut out = p;
        out.extend(q);
        out
    }

    pub fn solve(&self, s: &StateVector) -> StateVector {
        StateVector::from_flat(&self.solve_flat(&s.to_flat()))
    }
}

/// Shift used to manufacture data in the domain of powers of `A`.
pub const SMOOTHING_SHIFT: f64 = 1.0;

/// `(A - 1)^{-k} U`, normalised in energy, together with the graph-norm
/// surrogate `||(A - 1)^k result||_W`.
pub fn smooth_data(op: &BlockOperator, state: &StateVector, k: usize) -> Result<(StateVector, f64)> {
    if k > 4 {
        return Err(Error::InvalidArgument(format!("smoothing order {k} exceeds 4")));
    }
    let gram = op.gram();
    let mut x = state.to_flat();
    if k > 0 {
        let solver = op.shifted(Complex64::new(SMOOTHING_SHIFT, 0.0))?;
        for _ in 0..k {
            x = solver.solve_flat(&x);
        }
    }
    let nrm = gram.norm(&x);
    if !(nrm > 0.0) {
        return Err(Error::InvalidArgument("data has zero energy".into()));
    }
    x.iter_mut().for_each(|v| *v /= nrm);
    let mut y = x.clone();
    for _ in 0..k {
        let ay = op.apply_flat(&y);
        y = ay.iter().zip(&y).map(|(a, b)| a - SMOOTHING_SHIFT * b).collect();
    }
    Ok((StateVector::from_flat(&x), gram.norm(&y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{DomainSpec, Region};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn interval_op(res: f64, damping: DampingProfile) -> (Grid, BlockOperator) {
        let g = Grid::build(&DomainSpec::interval(1.0).unwrap(), res).unwrap();
        let op = BlockOperator::from_grid(&g, &damping).unwrap();
        (g, op)
    }

    fn box_damping() -> DampingProfile {
        DampingProfile::indicator(
            Region::Slab {
                axis: 0,
                lo: 0.3,
                hi: 0.7,
            },
            1.0,
        )
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
        let mut r = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let u = (0..n).map(|_| r()).collect();
        let v = (0..n).map(|_| r()).collect();
        StateVector { u, v }
    }

    #[test]
    fn block_structure() {
        let (_, op) = interval_op(20.0, box_damping());
        let n = op.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(n, &mut rng);
        let only_u = StateVector {
            u: s.u.clone(),
            v: vec![c(0.0, 0.0); n],
        };
        let out = op.apply(&only_u);
        assert!(out.u.iter().all(|x| *x == c(0.0, 0.0)));
        assert_eq!(out.v, op.l().apply(&s.u));
    }

    #[test]
    fn undamped_generator_is_skew() {
        let (_, op) = interval_op(30.0, DampingProfile::zero());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = op.gram();
        for _ in 0..20 {
            let x = random_state(op.dim(), &mut rng).to_flat();
            let y = random_state(op.dim(), &mut rng).to_flat();
            let s = w.inner(&op.apply_flat(&x), &y) + w.inner(&x, &op.apply_flat(&y));
            assert!(s.norm() <= 1e-12 * w.norm(&x) * w.norm(&op.apply_flat(&y)));
        }
    }

    #[test]
    fn adjoint_closed_form_matches_gram_definition() {
        let (_, op) = interval_op(25.0, box_damping());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = op.gram();
        let x = random_state(op.dim(), &mut rng).to_flat();
        let y = random_state(op.dim(), &mut rng).to_flat();
        let lhs = w.inner(&op.apply_flat(&x), &y);
        let rhs = w.inner(&x, &op.apply_adjoint_flat(&y));
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn shifted_solves_invert_and_are_adjoint() {
        for periodic in [false, true] {
            let spec = if periodic {
                DomainSpec::torus(&[1.0, 1.0]).unwrap()
            } else {
                DomainSpec::rectangle(&[1.0, 0.7]).unwrap()
            };
            let g = Grid::build(&spec, 12.0).unwrap();
            let op = BlockOperator::from_grid(
                &g,
                &DampingProfile::indicator(
                    Region::Slab {
                        axis: 0,
                        lo: 0.2,
                        hi: 0.5,
                    },
                    0.7,
                ),
            )
            .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for z in [c(0.0, 3.7), c(0.4, -11.0), c(2.0, 0.0)] {
                let s = op.shifted(z).unwrap();
                let x = random_state(op.dim(), &mut rng).to_flat();
                let y = random_state(op.dim(), &mut rng).to_flat();
                let r = s.solve_flat(&x);
                let back: Vec<Complex64> = op.apply_flat(&r).iter().zip(&r).map(|(a, b)| a - z * b).collect();
                let err = back.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-10, "residual {err}");
                let w = op.gram();
                let lhs = w.inner(&r, &y);
                let rhs = w.inner(&x, &s.solve_adjoint_flat(&y));
                assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn eigenvector_energy_is_eigenvalue() {
        let (g, op) = interval_op(40.0, DampingProfile::zero());
        let h = g.h()[0];
        let k = 3.0;
        let mut u: Vec<f64> = g
            .nodes()
            .iter()
            .map(|p| (k * std::f64::consts::PI * p.x[0]).sin())
            .collect();
        let l2 = (g.mu_ref() * u.iter().map(|x| x * x).sum::<f64>()).sqrt();
        u.iter_mut().for_each(|x| *x /= l2);
        let s = StateVector::from_real(&u, &vec![0.0; u.len()]).unwrap();
        let mu = 4.0 / (h * h) * (k * std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((energy(&s, op.gram()) - mu).abs() < 1e-9 * mu);
        assert_eq!(energy(&StateVector::zeros(u.len()), op.gram()), 0.0);
        let only_v = StateVector::from_real(&vec![0.0; u.len()], &u).unwrap();
        assert!((energy(&only_v, op.gram()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_is_positive_definite_under_dirichlet() {
        let (_, op) = interval_op(20.0, DampingProfile::zero());
        assert!(op.gram().min_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn smoothing_order_zero_normalises() {
        let (_, op) = interval_op(20.0, box_damping());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_state(op.dim(), &mut rng);
        let (r, dn) = smooth_data(&op, &s, 0).unwrap();
        assert!((energy(&r, op.gram()) - 1.0).abs() < 1e-12);
        assert!((dn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_preserves_undamped_eigenvectors() {
        let (g, op) = interval_op(30.0, DampingProfile::zero());
        let h = g.h()[0];
        let nu = 2.0 / h * (2.0 * std::f64::consts::PI * h / 2.0).sin();
        let e: Vec<Complex64> = g
            .nodes()
            .iter()
            .map(|p| c((2.0 * std::f64::consts::PI * p.x[0]).sin(), 0.0))
            .collect();
        let s = StateVector {
            u: e.clone(),
            v: e.iter().map(|x| x * c(0.0, nu)).collect(),
        };
        let (r, _) = smooth_data(&op, &s, 1).unwrap();
        let scale = s.u[3] / r.u[3];
        let aligned = r.scaled(scale);
        assert!(aligned.max_abs_diff(&s) < 1e-9 * s.u.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn smoothed_graph_norm_is_grid_stable() {
        // Continuum data, so both grids sample the same function.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let coef: Vec<(f64, f64)> = (1..=12)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm_at = |res: f64| {
            let (g, op) = interval_op(res, box_damping());
            let f = |x: f64, pick: usize| {
                coef.iter()
                    .enumerate()
                    .map(|(k, c)| [c.0, c.1][pick] * ((k + 1) as f64 * std::f64::consts::PI * x).sin() / (k + 1) as f64)
                    .sum::<f64>()
            };
            let u: Vec<f64> = g.nodes().iter().map(|p| f(p.x[0], 0)).collect();
            let v: Vec<f64> = g.nodes().iter().map(|p| f(p.x[0], 1)).collect();
            let (r, _) = smooth_data(&op, &StateVector::from_real(&u, &v).unwrap(), 1).unwrap();
            op.gram().norm(&op.apply_flat(&r.to_flat()))
        };
        let (a, b) = (norm_at(100.0), norm_at(200.0));
        assert!(a.is_finite() && ((a - b) / b).abs() < 0.1, "{a} vs {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dissipation_identity_holds(seed in any::<u64>(), lo in 0.0f64..0.5, width in 0.05f64..0.5, value in 0.0f64..5.0) {
            let damping = DampingProfile::indicator(Region::Slab { axis: 0, lo, hi: lo + width }, value);
            let (_, op) = interval_op(40.0, damping);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_state(op.dim(), &mut rng).to_flat();
            let w = op.gram();
            let re = w.inner(&op.apply_flat(&x), &x).re;
            let diss = op.dissipation(&x[op.dim()..]);
            prop_assert!(re <= 1e-12 * w.norm_sq(&x));
            prop_assert!((re + diss).abs() <= 1e-12 * (diss.abs() + w.norm_sq(&x)));
        }
    }
}
